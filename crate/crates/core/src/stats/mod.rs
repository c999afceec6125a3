//! Real-vs-simulated distributional comparisons.

mod battery;
mod bootstrap;
mod icc;
mod ks;
mod levene;
mod mwu;
mod rank;

use thiserror::Error;

pub use battery::{
    run_battery, BatteryConfig, ComparisonReport, IccRecord, KsRecord, LeveneRecord, MwuRecord, PairingDesign,
    SpearmanRecord, Subscale, SubscaleComparison,
};
pub use bootstrap::{
    bootstrap_paired_spearman, BootstrapPlan, BootstrapSpearman, MismatchPolicy, StrataSpec, StratumKey,
};
pub(crate) use battery::fmt_p;
pub use icc::{icc_a1, Icc};
pub use ks::{kolmogorov_q, ks_two_sample, KsTest};
pub use levene::{levene, Center, LeveneTest};
pub use mwu::{mann_whitney_u, MwuMethod, MwuTest};
pub use rank::{midranks, pearson, spearman, spearman_test, SpearmanTest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("need at least 5 pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("strata present in only one dataset: {}", .0.join(", "))]
    StratumMismatch(Vec<String>),
    #[error("{0} is undefined for these data")]
    Undefined(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
