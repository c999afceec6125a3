use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FactorError;

/// Divisor used for the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovDivisor {
    /// Maximum-likelihood (biased) covariance, divide by N. Used by the fitter.
    #[default]
    N,
    NMinusOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub cov: DMatrix<f64>,
    pub means: DVector<f64>,
    pub n: usize,
}

/// Sample covariance and means of an `n × p` data matrix.
pub fn sample_moments(data: &DMatrix<f64>, divisor: CovDivisor) -> Result<Moments, FactorError> {
    let (n, p) = data.shape();
    if n <= p {
        return Err(FactorError::InsufficientData(format!("N = {n} must exceed p = {p}")));
    }
    let means = DVector::from_iterator(p, (0..p).map(|j| data.column(j).sum() / n as f64));
    let mut centered = data.clone();
    for j in 0..p {
        let m = means[j];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let denom = match divisor {
        CovDivisor::N => n as f64,
        CovDivisor::NMinusOne => (n - 1) as f64,
    };
    let mut cov = centered.transpose() * &centered / denom;
    super::linalg::symmetrize(&mut cov);
    if let Some(j) = (0..p).find(|&j| cov[(j, j)] <= 1e-12 * (1.0 + means[j].abs())) {
        return Err(FactorError::DegenerateItem(j));
    }
    Ok(Moments { cov, means, n })
}
