use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_paired_spearman, MismatchPolicy, StrataSpec};
use super::icc::{icc_a1, Icc};
use super::ks::{ks_two_sample, KsTest};
use super::levene::{levene, Center, LeveneTest};
use super::mwu::{mann_whitney_u, MwuMethod, MwuTest};
use super::rank::{spearman, spearman_test};
use super::{quantile_sorted, StatsError};
use crate::ingest::{subscale_scores, ResponseMatrix, ScoreMethod};
use crate::seed::rng_for;

pub type IccRecord = Icc;
pub type MwuRecord = MwuTest;
pub type KsRecord = KsTest;
pub type LeveneRecord = LeveneTest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingDesign {
    /// Simulated respondents share ids with real ones.
    PairedExact,
    #[default]
    BootstrapStratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscale {
    pub name: String,
    /// Item columns.
    pub items: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub pairing: PairingDesign,
    pub strata: StrataSpec,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub levene_center: Center,
    pub mwu_method: MwuMethod,
    pub mismatch: MismatchPolicy,
    pub score: ScoreMethod,
    pub alpha: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            pairing: PairingDesign::BootstrapStratified,
            strata: StrataSpec::default(),
            bootstrap_b: 5000,
            seed: 0,
            levene_center: Center::Median,
            mwu_method: MwuMethod::Auto,
            mismatch: MismatchPolicy::Error,
            score: ScoreMethod::Mean,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanRecord {
    pub rho_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    #[serde(rename = "B")]
    pub b: usize,
    /// Two-sided p of the exact-pairing correlation; absent for the bootstrap.
    pub p: Option<f64>,
    pub n_undefined: usize,
    pub collapsed: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resamples: Vec<f64>,
}

impl SpearmanRecord {
    /// Significantly positive: the interval excludes 0 from above, or the
    /// exact test rejects with a positive estimate.
    pub fn significantly_positive(&self, alpha: f64) -> bool {
        self.ci_lo > 0.0 || (self.rho_hat > 0.0 && self.p.is_some_and(|p| p < alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscaleComparison {
    pub name: String,
    pub n_real: usize,
    pub n_sim: usize,
    pub n_pairs: Option<usize>,
    pub spearman: Option<SpearmanRecord>,
    pub icc: Option<IccRecord>,
    pub mwu: MwuRecord,
    pub ks: KsRecord,
    pub levene: LeveneRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub design: PairingDesign,
    pub levene_center: Center,
    pub alpha: f64,
    pub subscales: Vec<SubscaleComparison>,
}

/// `.13`, `< .001`.
pub(crate) fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "< .001".into()
    } else {
        let s = if p < 0.01 { format!("{p:.3}") } else { format!("{p:.2}") };
        s.trim_start_matches('0').to_string()
    }
}

/// Correlation-style value without the leading zero: `-.11`, `.19`.
pub(crate) fn fmt_r(v: f64) -> String {
    if !v.is_finite() {
        return "n/a".into();
    }
    let s = format!("{v:.2}");
    s.replacen("0.", ".", 1)
}

pub(crate) fn fmt_thousands(v: f64) -> String {
    let whole = v.trunc() as i64;
    let digits = whole.abs().to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    // U is a multiple of one half
    let frac = if (v - v.trunc()).abs() > 1e-9 { ".5" } else { "" };
    format!("{}{out}{frac}", if v < 0.0 { "-" } else { "" })
}

impl ComparisonReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let center = match self.levene_center {
            Center::Median => "median-centered",
            Center::Mean => "mean-centered",
        };
        out.push_str(&format!(
            "{:<20} {:>24} {:>30} {:>22} {:>30}\n",
            "Subscale", "Spearman rho [95% CI]", "Mann-Whitney", "Kolmogorov-Smirnov", format!("Levene ({center})")
        ));
        for s in &self.subscales {
            let rho = s
                .spearman
                .as_ref()
                .map(|r| format!("{} [{}, {}]", fmt_r(r.rho_hat), fmt_r(r.ci_lo), fmt_r(r.ci_hi)))
                .unwrap_or_else(|| "n/a".into());
            let f = if s.levene.f.is_finite() { format!("{:.2}", s.levene.f) } else { "inf".into() };
            out.push_str(&format!(
                "{:<20} {:>24} {:>30} {:>22} {:>30}\n",
                s.name,
                rho,
                format!("U = {}, p = {}", fmt_thousands(s.mwu.u), fmt_p(s.mwu.p)),
                format!("D = {}, p = {}", fmt_r(s.ks.d), fmt_p(s.ks.p)),
                format!("F({}, {}) = {}, p = {}", s.levene.df1, s.levene.df2, f, fmt_p(s.levene.p)),
            ));
            if let Some(icc) = &s.icc {
                out.push_str(&format!(
                    "{:<20} ICC = {}, 95% CI [{}, {}], F({}, {}) = {:.2}, p = {}\n",
                    "",
                    fmt_r(icc.value),
                    fmt_r(icc.ci_lo),
                    fmt_r(icc.ci_hi),
                    icc.df1,
                    icc.df2,
                    icc.f,
                    fmt_p(icc.p)
                ));
            }
        }
        out
    }
}

fn paired_spearman(pairs: &[(f64, f64)], b: usize, seed: u64) -> Result<SpearmanRecord, StatsError> {
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let test = spearman_test(&x, &y)?;
    let resamples: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, "pair_bootstrap", k as u64);
            let idx: Vec<usize> = (0..pairs.len()).map(|_| rng.random_range(0..pairs.len())).collect();
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            spearman(&xs, &ys).unwrap_or(f64::NAN)
        })
        .collect();
    let mut defined: Vec<f64> = resamples.iter().copied().filter(|v| v.is_finite()).collect();
    defined.sort_by(f64::total_cmp);
    let (ci_lo, ci_hi) = if defined.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (quantile_sorted(&defined, 0.025), quantile_sorted(&defined, 0.975))
    };
    Ok(SpearmanRecord {
        rho_hat: test.rho,
        ci_lo,
        ci_hi,
        b,
        p: Some(test.p),
        n_undefined: b - defined.len(),
        collapsed: None,
        resamples,
    })
}

/// Runs every comparison for each subscale.
pub fn run_battery(
    real: &ResponseMatrix,
    sim: &ResponseMatrix,
    subscales: &[Subscale],
    config: &BatteryConfig,
) -> Result<ComparisonReport, StatsError> {
    if real.n_items() != sim.n_items() {
        return Err(StatsError::InvalidInput(format!(
            "real has {} items, simulated has {}",
            real.n_items(),
            sim.n_items()
        )));
    }
    let mut out = Vec::with_capacity(subscales.len());
    for (si, sub) in subscales.iter().enumerate() {
        if let Some(&bad) = sub.items.iter().find(|&&i| i >= real.n_items()) {
            return Err(StatsError::InvalidInput(format!("subscale {} uses column {bad}", sub.name)));
        }
        let rs = subscale_scores(real, &sub.items, config.score);
        let ss = subscale_scores(sim, &sub.items, config.score);
        let rv: Vec<f64> = rs.iter().flatten().copied().collect();
        let sv: Vec<f64> = ss.iter().flatten().copied().collect();
        let seed = crate::seed::derive_seed(config.seed, "battery", si as u64);
        let mut notes = Vec::new();
        let (spearman_rec, icc, n_pairs) = match config.pairing {
            PairingDesign::PairedExact => {
                let sim_by_id: HashMap<&str, f64> = sim
                    .rows
                    .iter()
                    .zip(&ss)
                    .filter_map(|(r, s)| s.map(|v| (r.id.as_str(), v)))
                    .collect();
                let pairs: Vec<(f64, f64)> = real
                    .rows
                    .iter()
                    .zip(&rs)
                    .filter_map(|(r, s)| Some((s.as_ref().copied()?, *sim_by_id.get(r.id.as_str())?)))
                    .collect();
                let sp = match paired_spearman(&pairs, config.bootstrap_b, seed) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        notes.push(format!("Spearman: {e}"));
                        None
                    }
                };
                let icc = match icc_a1(&pairs, config.alpha) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        notes.push(format!("ICC: {e}"));
                        None
                    }
                };
                (sp, icc, Some(pairs.len()))
            }
            PairingDesign::BootstrapStratified => {
                let keyed = |m: &ResponseMatrix, s: &[Option<f64>]| {
                    m.rows
                        .iter()
                        .zip(s)
                        .filter_map(|(r, v)| v.map(|v| (config.strata.key(r), v)))
                        .collect::<Vec<_>>()
                };
                let rk = keyed(real, &rs);
                let sk = keyed(sim, &ss);
                let sp = match bootstrap_paired_spearman(&rk, &sk, config.bootstrap_b, seed, config.mismatch) {
                    Ok(r) => Some(SpearmanRecord {
                        rho_hat: r.rho_hat,
                        ci_lo: r.ci_lo,
                        ci_hi: r.ci_hi,
                        b: r.b,
                        p: None,
                        n_undefined: r.n_undefined,
                        collapsed: r.collapsed,
                        resamples: r.resamples,
                    }),
                    Err(e @ StatsError::StratumMismatch(_)) => return Err(e),
                    Err(e) => {
                        notes.push(format!("Spearman: {e}"));
                        None
                    }
                };
                (sp, None, None)
            }
        };
        let mwu = mann_whitney_u(&rv, &sv, config.mwu_method)?;
        let ks = ks_two_sample(&rv, &sv)?;
        if ks.ties {
            notes.push("KS p-value is asymptotic; ties present".into());
        }
        let lev = levene(&[&rv, &sv], config.levene_center)?;
        out.push(SubscaleComparison {
            name: sub.name.clone(),
            n_real: rv.len(),
            n_sim: sv.len(),
            n_pairs,
            spearman: spearman_rec,
            icc,
            mwu,
            ks,
            levene: lev,
            notes,
        });
    }
    Ok(ComparisonReport {
        design: config.pairing,
        levene_center: config.levene_center,
        alpha: config.alpha,
        subscales: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Respondent, Source};
    use crate::prompt::ScaleDefinition;
    use crate::sampling::{Ethnicity, Gender};

    fn matrix(source: Source, values: &[[f64; 2]]) -> ResponseMatrix {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, v)| Respondent {
                id: format!("r{i}"),
                age: Some(20 + (i as u32 % 40)),
                gender: Some(if i % 2 == 0 { Gender::Male } else { Gender::Female }),
                ethnicity: Ethnicity::White,
                values: v.iter().map(|&x| Some(x)).collect(),
            })
            .collect();
        ResponseMatrix::new(source, ScaleDefinition::generic("t", 2, 1, 5), rows).unwrap()
    }

    fn fixture(n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| [(1 + i % 5) as f64, (1 + (i * 7 + 3) % 5) as f64]).collect()
    }

    #[test]
    fn self_comparison_matched_ids() {
        let real = matrix(Source::Real, &fixture(60));
        let sim = ResponseMatrix {
            source: Source::Simulated,
            ..real.clone()
        };
        let config = BatteryConfig {
            pairing: PairingDesign::PairedExact,
            bootstrap_b: 200,
            ..BatteryConfig::default()
        };
        let subs = [Subscale {
            name: "All".into(),
            items: vec![0, 1],
        }];
        let rep = run_battery(&real, &sim, &subs, &config).unwrap();
        let s = &rep.subscales[0];
        assert_eq!(s.icc.unwrap().value, 1.0);
        assert_eq!(s.ks.d, 0.0);
        assert_eq!(s.levene.f, 0.0);
        assert!(s.mwu.p > 0.99);
        assert!((s.spearman.as_ref().unwrap().rho_hat - 1.0).abs() < 1e-12);
        assert!(rep.to_table().contains("U = 1,800"));
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_p(0.13), ".13");
        assert_eq!(fmt_p(0.0042), ".004");
        assert_eq!(fmt_p(0.0004), "< .001");
        assert_eq!(fmt_r(-0.114), "-.11");
        assert_eq!(fmt_thousands(83365.0), "83,365");
        assert_eq!(fmt_thousands(41516.5), "41,516.5");
    }
}
