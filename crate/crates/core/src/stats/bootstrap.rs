use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rank::spearman;
use super::{quantile_sorted, StatsError};
use crate::ingest::Respondent;
use crate::sampling::{bracket_of, default_brackets, AgeBracket, Ethnicity, Gender};
use crate::seed::rng_for;

/// Demographic cell used to stratify the bootstrap. `None` marks a collapsed
/// (or unknown) dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub age_bracket: Option<AgeBracket>,
    pub gender: Option<Gender>,
    pub ethnicity: Option<Ethnicity>,
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let age = self.age_bracket.map(|b| b.to_string()).unwrap_or_else(|| "*".into());
        let gender = self.gender.map(|g| g.to_string()).unwrap_or_else(|| "*".into());
        let eth = self.ethnicity.map(|e| e.to_string()).unwrap_or_else(|| "*".into());
        write!(f, "{age}/{gender}/{eth}")
    }
}

/// Which demographics define strata, with one bracketing for both datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataSpec {
    pub brackets: Vec<AgeBracket>,
    pub by_age: bool,
    pub by_gender: bool,
    pub by_ethnicity: bool,
}

impl Default for StrataSpec {
    fn default() -> Self {
        Self {
            brackets: default_brackets(),
            by_age: true,
            by_gender: true,
            by_ethnicity: true,
        }
    }
}

impl StrataSpec {
    pub fn key(&self, r: &Respondent) -> StratumKey {
        StratumKey {
            age_bracket: if self.by_age {
                r.age.and_then(|a| bracket_of(&self.brackets, a)).map(|i| self.brackets[i])
            } else {
                None
            },
            gender: if self.by_gender { r.gender } else { None },
            ethnicity: if self.by_ethnicity { Some(r.ethnicity) } else { None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchPolicy {
    #[default]
    Error,
    /// Drop ethnicity, then age, then gender until the strata line up.
    Collapse,
}

/// Stratum membership of both datasets after any collapsing.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    /// (key, real indices, simulated indices), in key order.
    pub strata: Vec<(StratumKey, Vec<usize>, Vec<usize>)>,
    pub collapsed: Option<String>,
}

fn group(keys: &[StratumKey]) -> BTreeMap<StratumKey, Vec<usize>> {
    let mut out: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        out.entry(*k).or_default().push(i);
    }
    out
}

fn mismatched(real: &BTreeMap<StratumKey, Vec<usize>>, sim: &BTreeMap<StratumKey, Vec<usize>>) -> Vec<String> {
    real.keys()
        .filter(|k| !sim.contains_key(k))
        .map(|k| format!("{k} (real only)"))
        .chain(sim.keys().filter(|k| !real.contains_key(k)).map(|k| format!("{k} (simulated only)")))
        .collect()
}

impl BootstrapPlan {
    pub fn new(real: &[StratumKey], sim: &[StratumKey], policy: MismatchPolicy) -> Result<Self, StatsError> {
        type Collapse = fn(&mut StratumKey);
        let steps: [(&str, Collapse); 3] = [
            ("ethnicity", |k| k.ethnicity = None),
            ("age", |k| k.age_bracket = None),
            ("gender", |k| k.gender = None),
        ];
        let mut r = real.to_vec();
        let mut s = sim.to_vec();
        let mut dropped = Vec::new();
        loop {
            let (gr, gs) = (group(&r), group(&s));
            let bad = mismatched(&gr, &gs);
            if bad.is_empty() {
                let collapsed = (!dropped.is_empty()).then(|| format!("collapsed {}", dropped.join(", ")));
                if let Some(c) = &collapsed {
                    log::warn!("bootstrap strata {c}");
                }
                let strata = gr
                    .into_iter()
                    .map(|(k, ri)| {
                        let si = gs[&k].clone();
                        (k, ri, si)
                    })
                    .collect();
                return Ok(Self { strata, collapsed });
            }
            if policy == MismatchPolicy::Error || dropped.len() == steps.len() {
                return Err(StatsError::StratumMismatch(bad));
            }
            let (name, f) = steps[dropped.len()];
            r.iter_mut().for_each(f);
            s.iter_mut().for_each(f);
            dropped.push(name);
        }
    }

    /// Resample `b`: within each stratum, `n_s` real and `n_s` simulated
    /// indices drawn with replacement and paired in draw order.
    pub fn draw(&self, seed: u64, b: usize) -> Vec<(usize, usize)> {
        let mut rng = rng_for(seed, "bootstrap", b as u64);
        let mut out = Vec::new();
        for (_, real, sim) in &self.strata {
            let n_s = real.len();
            let ri: Vec<usize> = (0..n_s).map(|_| real[rng.random_range(0..real.len())]).collect();
            let si: Vec<usize> = (0..n_s).map(|_| sim[rng.random_range(0..sim.len())]).collect();
            out.extend(ri.into_iter().zip(si));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpearman {
    /// Mean of the defined resample correlations.
    pub rho_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub b: usize,
    /// Resamples where a score vector was constant.
    pub n_undefined: usize,
    pub n_strata: usize,
    pub collapsed: Option<String>,
    /// Resample statistics in resample order, NaN where undefined.
    pub resamples: Vec<f64>,
}

/// Stratified paired bootstrap of Spearman's rho between real and simulated
/// scores with a percentile 95% interval.
pub fn bootstrap_paired_spearman(
    real: &[(StratumKey, f64)],
    sim: &[(StratumKey, f64)],
    b: usize,
    seed: u64,
    policy: MismatchPolicy,
) -> Result<BootstrapSpearman, StatsError> {
    if real.len() < 3 || sim.is_empty() {
        return Err(StatsError::InsufficientData { needed: 3, got: real.len().min(sim.len()) });
    }
    let rk: Vec<StratumKey> = real.iter().map(|p| p.0).collect();
    let sk: Vec<StratumKey> = sim.iter().map(|p| p.0).collect();
    let plan = BootstrapPlan::new(&rk, &sk, policy)?;
    let resamples: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let pairs = plan.draw(seed, k);
            let x: Vec<f64> = pairs.iter().map(|&(i, _)| real[i].1).collect();
            let y: Vec<f64> = pairs.iter().map(|&(_, j)| sim[j].1).collect();
            spearman(&x, &y).unwrap_or(f64::NAN)
        })
        .collect();
    let mut defined: Vec<f64> = resamples.iter().copied().filter(|v| v.is_finite()).collect();
    if defined.is_empty() {
        return Err(StatsError::Undefined("bootstrap Spearman correlation"));
    }
    let rho_hat = defined.iter().sum::<f64>() / defined.len() as f64;
    defined.sort_by(f64::total_cmp);
    Ok(BootstrapSpearman {
        rho_hat,
        ci_lo: quantile_sorted(&defined, 0.025),
        ci_hi: quantile_sorted(&defined, 0.975),
        b,
        n_undefined: b - defined.len(),
        n_strata: plan.strata.len(),
        collapsed: plan.collapsed,
        resamples,
    })
}
