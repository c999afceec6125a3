use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{cov_to_cor, sorted_eigenvalues};
use super::moments::{sample_moments, CovDivisor};
use super::FactorError;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionMethod {
    #[default]
    ParallelAnalysis,
    Kaiser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelAnalysis {
    pub observed: Vec<f64>,
    /// Per-position percentile of the null eigenvalues.
    pub null_percentile: Vec<f64>,
    pub n_factors: usize,
}

fn correlation_eigenvalues(data: &DMatrix<f64>) -> Result<Vec<f64>, FactorError> {
    let m = sample_moments(data, CovDivisor::N)?;
    Ok(sorted_eigenvalues(&cov_to_cor(&m.cov)))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Horn's parallel analysis against `n_sims` standard-normal datasets of the
/// same shape. Retains leading factors whose eigenvalue exceeds the null
/// `percentile`.
pub fn parallel_analysis(
    data: &DMatrix<f64>,
    n_sims: usize,
    percentile: f64,
    seed: u64,
) -> Result<ParallelAnalysis, FactorError> {
    let (n, p) = data.shape();
    if p < 2 {
        return Err(FactorError::InsufficientData(format!("need at least 2 items, got {p}")));
    }
    let observed = correlation_eigenvalues(data)?;
    let sims: Vec<Vec<f64>> = (0..n_sims)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, "parallel_analysis", k as u64);
            let z = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
            correlation_eigenvalues(&z).expect("normal noise has full rank")
        })
        .collect();
    let null_percentile: Vec<f64> = (0..p)
        .map(|k| {
            let mut col: Vec<f64> = sims.iter().map(|s| s[k]).collect();
            col.sort_by(f64::total_cmp);
            quantile(&col, percentile)
        })
        .collect();
    let n_factors = observed
        .iter()
        .zip(&null_percentile)
        .take_while(|(o, q)| o > q)
        .count();
    Ok(ParallelAnalysis {
        observed,
        null_percentile,
        n_factors,
    })
}

/// Number of factors to retain. Parallel analysis uses 100 simulated datasets
/// and the 95th percentile.
pub fn suggest_n_factors(data: &DMatrix<f64>, method: RetentionMethod, seed: u64) -> Result<usize, FactorError> {
    match method {
        RetentionMethod::ParallelAnalysis => Ok(parallel_analysis(data, 100, 0.95, seed)?.n_factors),
        RetentionMethod::Kaiser => {
            if data.ncols() < 2 {
                return Err(FactorError::InsufficientData("need at least 2 items".into()));
            }
            Ok(correlation_eigenvalues(data)?.iter().filter(|&&e| e > 1.0).count())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::FactorPopulation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_retains_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = DMatrix::from_fn(1000, 10, |_, _| StandardNormal.sample(&mut rng));
        assert_eq!(suggest_n_factors(&d, RetentionMethod::ParallelAnalysis, 1).unwrap(), 0);
    }

    #[test]
    fn strong_three_factor_structure() {
        let pop = FactorPopulation::simple(3, 3, 0.75, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let d = pop.sample(600, &mut rng);
        assert_eq!(suggest_n_factors(&d, RetentionMethod::ParallelAnalysis, 2).unwrap(), 3);
        assert_eq!(suggest_n_factors(&d, RetentionMethod::Kaiser, 2).unwrap(), 3);
    }

    #[test]
    fn single_item_is_an_error() {
        let d = DMatrix::from_fn(50, 1, |r, _| r as f64);
        assert!(matches!(
            suggest_n_factors(&d, RetentionMethod::ParallelAnalysis, 0),
            Err(FactorError::InsufficientData(_))
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let pop = FactorPopulation::simple(2, 3, 0.5, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = pop.sample(200, &mut rng);
        assert_eq!(parallel_analysis(&d, 20, 0.95, 7).unwrap(), parallel_analysis(&d, 20, 0.95, 7).unwrap());
    }
}
