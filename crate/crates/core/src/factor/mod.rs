//! Exploratory and confirmatory factor analysis.
//!
//! CFA is normal-theory maximum likelihood with a mean structure, fitted
//! jointly over one or more groups with optional cross-group equality
//! constraints. The robust (`mlr`) estimator keeps the ML point estimates and
//! rescales the test statistic with a fourth-moment correction.

mod cfa;
mod efa;
mod indices;
pub mod linalg;
mod model;
mod moments;
mod optim;
mod retention;
mod robust;
mod rotation;
mod simulate;

use thiserror::Error;

pub use cfa::{
    fit_baseline, fit_cfa, fit_multigroup, Estimator, FitOptions, FitResult, GroupParams,
    InvarianceLevel, MlDiscrepancy, StatMultiplier,
};
pub use efa::{fit_efa, fit_efa_cor, EfaOptions, EfaResult, Extraction};
pub use indices::{
    fit_indices, noncentral_chi2_cdf, rmsea_ci, srmr, srmr_multigroup, FitIndices,
};
pub use model::{parse_model_spec, FactorSpec, Identification, MeasurementModel, ModelSpec};
pub use moments::{sample_moments, CovDivisor, Moments};
pub use retention::{parallel_analysis, suggest_n_factors, ParallelAnalysis, RetentionMethod};
pub use rotation::{rotate, tucker_congruence, Rotation, RotationResult};
pub use simulate::{simulate_normal, FactorPopulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("item {0} has zero variance")]
    DegenerateItem(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model spec line {line}: {reason}")]
    Spec { line: usize, reason: String },
}
