use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Population parameters of a linear factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPopulation {
    /// `p × m`.
    pub loadings: DMatrix<f64>,
    /// `m × m`.
    pub phi: DMatrix<f64>,
    pub residual_variances: DVector<f64>,
    pub intercepts: DVector<f64>,
    pub latent_means: DVector<f64>,
}

impl FactorPopulation {
    /// Simple structure with `per_factor` items per factor, common loading,
    /// residual `1 - loading²`, unit factor variances and a common factor
    /// correlation.
    pub fn simple(n_factors: usize, per_factor: usize, loading: f64, correlation: f64) -> Self {
        let p = n_factors * per_factor;
        let loadings = DMatrix::from_fn(p, n_factors, |i, f| if i / per_factor == f { loading } else { 0.0 });
        let phi = DMatrix::from_fn(n_factors, n_factors, |a, b| if a == b { 1.0 } else { correlation });
        Self {
            loadings,
            phi,
            residual_variances: DVector::from_element(p, 1.0 - loading * loading),
            intercepts: DVector::zeros(p),
            latent_means: DVector::zeros(n_factors),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.loadings * &self.phi * self.loadings.transpose() + DMatrix::from_diagonal(&self.residual_variances)
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.intercepts + &self.loadings * &self.latent_means
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        simulate_normal(&self.mean(), &self.covariance(), n, rng)
    }
}

/// `n` draws from N(mean, cov) as rows.
pub fn simulate_normal<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let p = mean.len();
    let l = cov.clone().cholesky().expect("population covariance must be positive definite").l();
    let mut out = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for r in 0..n {
        for k in 0..p {
            z[k] = rng.sample(StandardNormal);
        }
        let x = mean + &l * &z;
        out.row_mut(r).copy_from(&x.transpose());
    }
    out
}
