//! Draft-item screening: content validity from an expert panel, then EFA
//! iterations on simulated responses that prune items until a clean simple
//! structure remains.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{
    fit_efa, suggest_n_factors, EfaOptions, EfaResult, Extraction, FactorError, MeasurementModel, RetentionMethod,
    Rotation,
};
use crate::ingest::{IngestError, ResponseMatrix};
use crate::prompt::ScaleDefinition;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum PrototypeError {
    #[error("incomplete rating grid: {}", .0.join("; "))]
    IncompleteRatings(Vec<String>),
    #[error("ratings line {line}: {reason}")]
    BadRating { line: usize, reason: String },
    #[error("rated item {0} is not on the scale")]
    UnknownItem(String),
    #[error("need at least {needed} complete responses for {items} items, got {got}")]
    InsufficientSample { needed: usize, got: usize, items: usize },
    #[error("EFA did not converge at iteration {iteration}")]
    NonConvergent { iteration: usize, trail: Vec<PruneStep> },
    #[error("prototype infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Data(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertRating {
    pub item_id: String,
    pub expert_id: String,
    /// 1 to 4.
    pub relevance: u8,
}

/// Reads `item_id,expert_id,relevance` rows with a header line.
pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<ExpertRating>, PrototypeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ExpertRating>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| PrototypeError::BadRating {
            line,
            reason: e.to_string(),
        })?;
        if !(1..=4).contains(&r.relevance) {
            return Err(PrototypeError::BadRating {
                line,
                reason: format!("relevance {} outside 1..4", r.relevance),
            });
        }
        out.push(r);
    }
    Ok(out)
}

/// I-CVI cutoff for a panel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CviRule {
    /// 1.00 for panels of up to five experts, .78 for larger panels.
    #[default]
    Lynn,
    Fixed(f64),
}

impl CviRule {
    pub fn threshold(self, n_experts: usize) -> f64 {
        match self {
            CviRule::Lynn if n_experts <= 5 => 1.0,
            CviRule::Lynn => 0.78,
            CviRule::Fixed(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCvi {
    pub item_id: String,
    pub i_cvi: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CviReport {
    /// Items in id order.
    pub items: Vec<ItemCvi>,
    /// Mean of the I-CVIs.
    pub s_cvi_ave: f64,
    pub n_experts: usize,
    pub threshold: f64,
}

impl CviReport {
    pub fn retained_ids(&self) -> Vec<&str> {
        self.items.iter().filter(|i| i.retained).map(|i| i.item_id.as_str()).collect()
    }
}

/// Item and scale content validity. Every expert must rate every item once.
pub fn compute_cvi(ratings: &[ExpertRating], rule: CviRule) -> Result<CviReport, PrototypeError> {
    let items: BTreeSet<&str> = ratings.iter().map(|r| r.item_id.as_str()).collect();
    let experts: BTreeSet<&str> = ratings.iter().map(|r| r.expert_id.as_str()).collect();
    if items.is_empty() {
        return Err(PrototypeError::IncompleteRatings(vec!["no ratings".into()]));
    }
    let mut grid: BTreeMap<(&str, &str), u8> = BTreeMap::new();
    let mut gaps = Vec::new();
    for r in ratings {
        if grid.insert((&r.item_id, &r.expert_id), r.relevance).is_some() {
            gaps.push(format!("{} rated twice by {}", r.item_id, r.expert_id));
        }
    }
    for &i in &items {
        for &e in &experts {
            if !grid.contains_key(&(i, e)) {
                gaps.push(format!("{i} not rated by {e}"));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(PrototypeError::IncompleteRatings(gaps));
    }
    let n = experts.len();
    let threshold = rule.threshold(n);
    let out: Vec<ItemCvi> = items
        .iter()
        .map(|&i| {
            let relevant = experts.iter().filter(|&&e| grid[&(i, e)] >= 3).count();
            let i_cvi = relevant as f64 / n as f64;
            ItemCvi {
                item_id: i.to_string(),
                i_cvi,
                retained: i_cvi >= threshold - 1e-12,
            }
        })
        .collect();
    let s_cvi_ave = out.iter().map(|i| i.i_cvi).sum::<f64>() / out.len() as f64;
    Ok(CviReport {
        items: out,
        s_cvi_ave,
        n_experts: n,
        threshold,
    })
}

/// Column indices of the scale items that pass the content-validity screen.
/// Item ids are the `item_k` column names.
pub fn cvi_screen(scale: &ScaleDefinition, report: &CviReport) -> Result<Vec<usize>, PrototypeError> {
    let cols = scale.item_columns();
    for i in &report.items {
        if !cols.contains(&i.item_id) {
            return Err(PrototypeError::UnknownItem(i.item_id.clone()));
        }
    }
    let keep: BTreeSet<&str> = report.retained_ids().into_iter().collect();
    let kept: Vec<usize> = (0..cols.len()).filter(|&j| keep.contains(cols[j].as_str())).collect();
    if kept.is_empty() {
        return Err(PrototypeError::Infeasible("no item passed the content-validity screen".into()));
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrototypeConfig {
    pub extraction: Extraction,
    pub rotation: Rotation,
    pub retention: RetentionMethod,
    /// Fixes the factor count instead of estimating it each iteration.
    pub n_factors: Option<usize>,
    pub primary_min: f64,
    pub cross_gap_min: f64,
    pub min_items_per_factor: usize,
    pub n_starts: usize,
    pub seed: u64,
    /// Subscale names in factor order; `F1..Fk` when absent or short.
    pub factor_names: Vec<String>,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            extraction: Extraction::Minres,
            rotation: Rotation::Oblimin,
            retention: RetentionMethod::ParallelAnalysis,
            n_factors: None,
            primary_min: 0.40,
            cross_gap_min: 0.20,
            min_items_per_factor: 2,
            n_starts: 30,
            seed: 0,
            factor_names: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    LowPrimary,
    SmallGap,
    SoleItem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    pub iteration: usize,
    pub n_factors: usize,
    /// Column in the input matrix.
    pub column: usize,
    pub item_id: String,
    pub reason: PruneReason,
    pub primary: f64,
    pub gap: f64,
    pub loadings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedItem {
    pub column: usize,
    pub item_id: String,
    pub factor: usize,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePrototype {
    pub items: Vec<RetainedItem>,
    pub subscales: Vec<String>,
    pub n_factors: usize,
    pub efa: EfaResult,
    pub trail: Vec<PruneStep>,
    /// Violations left because pruning would break the per-factor floor.
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Violation {
    pos: usize,
    reason: PruneReason,
    primary: f64,
    gap: f64,
    factor: usize,
}

fn primary_and_gap(row: &[f64]) -> (usize, f64, f64) {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
    let p = row[idx[0]].abs();
    let s = idx.get(1).map(|&j| row[j].abs()).unwrap_or(0.0);
    (idx[0], p, p - s)
}

fn violations(efa: &EfaResult, cfg: &PrototypeConfig) -> Vec<Violation> {
    let rows: Vec<(usize, f64, f64)> = efa.loadings.iter().map(|r| primary_and_gap(r)).collect();
    let mut per_factor = vec![0usize; efa.n_factors];
    for r in &rows {
        per_factor[r.0] += 1;
    }
    let mut out: Vec<Violation> = rows
        .iter()
        .enumerate()
        .filter_map(|(pos, &(factor, primary, gap))| {
            let reason = if primary < cfg.primary_min {
                PruneReason::LowPrimary
            } else if gap < cfg.cross_gap_min {
                PruneReason::SmallGap
            } else if per_factor[factor] == 1 {
                PruneReason::SoleItem
            } else {
                return None;
            };
            Some(Violation {
                pos,
                reason,
                primary,
                gap,
                factor,
            })
        })
        .collect();
    out.sort_by(|a, b| a.primary.total_cmp(&b.primary).then(a.gap.total_cmp(&b.gap)).then(a.pos.cmp(&b.pos)));
    out
}

fn fit_round(
    sim: &ResponseMatrix,
    columns: &[usize],
    cfg: &PrototypeConfig,
    iteration: usize,
) -> Result<EfaResult, PrototypeError> {
    let data = sim.select_items(columns).complete_cases().0.data()?;
    let p = columns.len();
    let m = match cfg.n_factors {
        Some(m) => m,
        None => suggest_n_factors(&data, cfg.retention, derive_seed(cfg.seed, "prototype_retention", iteration as u64))?,
    }
    .clamp(1, p - 1);
    let opts = EfaOptions {
        extraction: cfg.extraction,
        rotation: cfg.rotation,
        n_starts: cfg.n_starts,
        seed: derive_seed(cfg.seed, "prototype_rotation", iteration as u64),
    };
    Ok(fit_efa(&data, m, &opts)?)
}

fn check_feasible(columns: &[usize], cfg: &PrototypeConfig) -> Result<(), PrototypeError> {
    let floor = 2 * cfg.min_items_per_factor.max(1);
    if columns.len() < floor {
        return Err(PrototypeError::Infeasible(format!(
            "{} items left, fewer than two factors' worth ({floor})",
            columns.len()
        )));
    }
    Ok(())
}

/// Iterated EFA pruning: each round drops the single worst item violating the
/// loading rules, until none remain or the per-factor floor would break.
pub fn prototype_scale(
    sim: &ResponseMatrix,
    columns: &[usize],
    cfg: &PrototypeConfig,
) -> Result<ScalePrototype, PrototypeError> {
    let n = sim.complete_cases().0.n_rows();
    let needed = (10 * columns.len()).min(300);
    if n < needed {
        return Err(PrototypeError::InsufficientSample {
            needed,
            got: n,
            items: columns.len(),
        });
    }
    let ids = sim.scale.item_columns();
    let mut current = columns.to_vec();
    let mut trail = Vec::new();
    for iteration in 0..=columns.len() {
        check_feasible(&current, cfg)?;
        let efa = fit_round(sim, &current, cfg, iteration)?;
        if !efa.converged {
            return Err(PrototypeError::NonConvergent { iteration, trail });
        }
        let viol = violations(&efa, cfg);
        let Some(worst) = viol.first().copied() else {
            return Ok(finish(current, efa, trail, Vec::new(), &ids, cfg));
        };
        let factor_size = efa.loadings.iter().filter(|r| primary_and_gap(r).0 == worst.factor).count();
        let breaks_floor = worst.reason != PruneReason::SoleItem && factor_size <= cfg.min_items_per_factor;
        if breaks_floor {
            let unresolved = viol
                .iter()
                .map(|v| format!("{} {:?} (primary {:.3}, gap {:.3})", ids[current[v.pos]], v.reason, v.primary, v.gap))
                .collect::<Vec<_>>();
            log::warn!("pruning stopped at the per-factor floor with {} violations", unresolved.len());
            return Ok(finish(current, efa, trail, unresolved, &ids, cfg));
        }
        let column = current[worst.pos];
        trail.push(PruneStep {
            iteration,
            n_factors: efa.n_factors,
            column,
            item_id: ids[column].clone(),
            reason: worst.reason,
            primary: worst.primary,
            gap: worst.gap,
            loadings: efa.loadings[worst.pos].clone(),
        });
        current.remove(worst.pos);
    }
    unreachable!("each round removes an item or returns")
}

/// Drops the trail's items in order and refits the final round.
pub fn replay_trail(
    sim: &ResponseMatrix,
    columns: &[usize],
    trail: &[PruneStep],
    cfg: &PrototypeConfig,
) -> Result<ScalePrototype, PrototypeError> {
    let mut current = columns.to_vec();
    for step in trail {
        let pos = current
            .iter()
            .position(|&c| c == step.column)
            .ok_or_else(|| PrototypeError::Infeasible(format!("trail drops {} twice", step.item_id)))?;
        current.remove(pos);
    }
    let efa = fit_round(sim, &current, cfg, trail.len())?;
    let ids = sim.scale.item_columns();
    let unresolved = violations(&efa, cfg)
        .iter()
        .map(|v| format!("{} {:?} (primary {:.3}, gap {:.3})", ids[current[v.pos]], v.reason, v.primary, v.gap))
        .collect();
    Ok(finish(current, efa, trail.to_vec(), unresolved, &ids, cfg))
}

fn finish(
    columns: Vec<usize>,
    efa: EfaResult,
    trail: Vec<PruneStep>,
    unresolved: Vec<String>,
    ids: &[String],
    cfg: &PrototypeConfig,
) -> ScalePrototype {
    // factors without items are dropped and the rest renumbered
    let assigned: Vec<(usize, f64)> = efa
        .loadings
        .iter()
        .map(|r| {
            let (f, _, _) = primary_and_gap(r);
            (f, r[f])
        })
        .collect();
    let used: BTreeSet<usize> = assigned.iter().map(|a| a.0).collect();
    let renumber: BTreeMap<usize, usize> = used.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    let items = columns
        .iter()
        .zip(&assigned)
        .map(|(&column, &(f, loading))| RetainedItem {
            column,
            item_id: ids[column].clone(),
            factor: renumber[&f],
            loading,
        })
        .collect();
    let subscales = (0..used.len())
        .map(|k| cfg.factor_names.get(k).cloned().unwrap_or_else(|| format!("F{}", k + 1)))
        .collect();
    ScalePrototype {
        items,
        subscales,
        n_factors: used.len(),
        efa,
        trail,
        unresolved,
    }
}

impl ScalePrototype {
    pub fn is_self_consistent(&self) -> bool {
        self.unresolved.is_empty()
    }

    pub fn columns(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.column).collect()
    }

    /// The retained items as a scale of their own, in column order.
    pub fn scale_definition(&self, draft: &ScaleDefinition) -> ScaleDefinition {
        ScaleDefinition {
            items: self.items.iter().map(|i| draft.items[i.column].clone()).collect(),
            ..draft.clone()
        }
    }

    /// Measurement model over the draft (input matrix) columns.
    pub fn measurement_model(&self) -> MeasurementModel {
        self.model_with(|_, it| it.column)
    }

    /// Measurement model over the columns of [`Self::scale_definition`].
    pub fn retained_model(&self) -> MeasurementModel {
        self.model_with(|j, _| j)
    }

    fn model_with(&self, col: impl Fn(usize, &RetainedItem) -> usize) -> MeasurementModel {
        let factors = self
            .subscales
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let items = self.items.iter().enumerate().filter(|(_, it)| it.factor == k).map(|(j, it)| col(j, it)).collect();
                (name.clone(), items)
            })
            .collect();
        MeasurementModel::new(factors).expect("every subscale has items")
    }

    pub fn pruning_log(&self) -> String {
        let mut out = String::new();
        for s in &self.trail {
            let l: Vec<String> = s.loadings.iter().map(|v| format!("{v:.3}")).collect();
            out.push_str(&format!(
                "iteration {}: {} factors, dropped {} ({:?}; primary {:.3}, gap {:.3}; loadings [{}])\n",
                s.iteration + 1,
                s.n_factors,
                s.item_id,
                s.reason,
                s.primary,
                s.gap,
                l.join(", ")
            ));
        }
        out.push_str(&format!("final: {} items on {} factors\n", self.items.len(), self.n_factors));
        for (k, name) in self.subscales.iter().enumerate() {
            let members: Vec<String> = self
                .items
                .iter()
                .filter(|i| i.factor == k)
                .map(|i| format!("{} ({:.3})", i.item_id, i.loading))
                .collect();
            out.push_str(&format!("  {name}: {}\n", members.join(", ")));
        }
        for u in &self.unresolved {
            out.push_str(&format!("unresolved: {u}\n"));
        }
        out
    }
}
