use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{cov_to_cor, sorted_eigen, sorted_eigenvalues, spd_inverse_logdet};
use super::moments::{sample_moments, CovDivisor};
use super::optim::{minimize, numeric_gradient, Objective, Settings};
use super::rotation::{rotate, Rotation};
use super::FactorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    #[default]
    Minres,
    Ml,
}

impl std::str::FromStr for Extraction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "minres" | "uls" => Ok(Extraction::Minres),
            "ml" => Ok(Extraction::Ml),
            o => Err(format!("unknown extraction {o:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfaOptions {
    pub extraction: Extraction,
    pub rotation: Rotation,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for EfaOptions {
    fn default() -> Self {
        Self {
            extraction: Extraction::Minres,
            rotation: Rotation::Oblimin,
            n_starts: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfaResult {
    /// Items × factors, rotated.
    pub loadings: Vec<Vec<f64>>,
    pub rotation: Rotation,
    pub factor_correlations: Vec<Vec<f64>>,
    /// Eigenvalues of the item correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub extraction: Extraction,
    pub n_factors: usize,
    pub communalities: Vec<f64>,
    pub uniquenesses: Vec<f64>,
    /// Sum of squared off-diagonal residuals of R − ΛΦΛᵀ.
    pub objective: f64,
    pub heywood: bool,
    pub converged: bool,
}

impl EfaResult {
    pub fn loading_matrix(&self) -> DMatrix<f64> {
        let p = self.loadings.len();
        DMatrix::from_fn(p, self.n_factors, |i, j| self.loadings[i][j])
    }
}

const PSI_FLOOR: f64 = 1e-6;

struct Minres<'a> {
    r: &'a DMatrix<f64>,
    m: usize,
}

impl Minres<'_> {
    fn reduced(&self, psi: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.r.clone();
        for i in 0..a.nrows() {
            a[(i, i)] -= psi[i];
        }
        a
    }
}

impl Objective for Minres<'_> {
    fn value(&self, psi: &DVector<f64>) -> f64 {
        sorted_eigenvalues(&self.reduced(psi))[self.m..].iter().map(|e| e * e).sum()
    }

    fn gradient(&self, psi: &DVector<f64>) -> DVector<f64> {
        let (vals, vecs) = sorted_eigen(&self.reduced(psi));
        DVector::from_fn(psi.len(), |i, _| {
            -2.0 * (self.m..vals.len()).map(|k| vals[k] * vecs[(i, k)].powi(2)).sum::<f64>()
        })
    }
}

fn minres_loadings(r: &DMatrix<f64>, psi: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut a = r.clone();
    for i in 0..a.nrows() {
        a[(i, i)] -= psi[i];
    }
    let (vals, vecs) = sorted_eigen(&a);
    DMatrix::from_fn(r.nrows(), m, |i, k| vecs[(i, k)] * vals[k].max(0.0).sqrt())
}

/// ML discrepancy over log uniquenesses.
struct MlExtraction<'a> {
    r: &'a DMatrix<f64>,
    m: usize,
}

impl MlExtraction<'_> {
    fn scaled(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let s = t.map(|v| (-0.5 * v).exp());
        DMatrix::from_fn(self.r.nrows(), self.r.nrows(), |i, j| self.r[(i, j)] * s[i] * s[j])
    }
}

impl Objective for MlExtraction<'_> {
    fn value(&self, t: &DVector<f64>) -> f64 {
        if t.iter().any(|v| !v.is_finite() || *v < -30.0) {
            return f64::INFINITY;
        }
        sorted_eigenvalues(&self.scaled(t))[self.m..]
            .iter()
            .map(|&g| if g > 0.0 { g - g.ln() - 1.0 } else { f64::INFINITY })
            .sum()
    }

    fn gradient(&self, t: &DVector<f64>) -> DVector<f64> {
        numeric_gradient(|v| self.value(v), t, 1e-6)
    }
}

fn ml_loadings(r: &DMatrix<f64>, psi: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let t = psi.map(f64::ln);
    let (vals, vecs) = sorted_eigen(&MlExtraction { r, m }.scaled(&t));
    DMatrix::from_fn(r.nrows(), m, |i, k| psi[i].sqrt() * vecs[(i, k)] * (vals[k] - 1.0).max(0.0).sqrt())
}

/// EFA of the correlation matrix of `data`.
pub fn fit_efa(data: &DMatrix<f64>, n_factors: usize, options: &EfaOptions) -> Result<EfaResult, FactorError> {
    let mom = sample_moments(data, CovDivisor::N)?;
    fit_efa_cor(&cov_to_cor(&mom.cov), n_factors, options)
}

/// EFA on a given correlation matrix.
pub fn fit_efa_cor(r: &DMatrix<f64>, n_factors: usize, options: &EfaOptions) -> Result<EfaResult, FactorError> {
    let p = r.nrows();
    if n_factors == 0 || n_factors >= p {
        return Err(FactorError::InvalidModel(format!(
            "n_factors must be in 1..{p}, got {n_factors}"
        )));
    }
    let (rinv, _) = spd_inverse_logdet(r)
        .ok_or_else(|| FactorError::InsufficientData("correlation matrix is not invertible".into()))?;
    let smc_psi = DVector::from_fn(p, |i, _| (1.0 / rinv[(i, i)]).clamp(PSI_FLOOR, 1.0));
    let settings = Settings {
        max_iter: 1000,
        grad_tol: 1e-8,
        f_tol: 1e-12,
    };
    let (mut psi, converged) = match options.extraction {
        Extraction::Minres => {
            let out = minimize(&Minres { r, m: n_factors }, smc_psi, settings);
            (out.x, out.converged)
        }
        Extraction::Ml => {
            let ml_settings = Settings {
                grad_tol: 1e-6,
                ..settings
            };
            let out = minimize(&MlExtraction { r, m: n_factors }, smc_psi.map(f64::ln), ml_settings);
            (out.x.map(f64::exp), out.converged)
        }
    };
    let mut heywood = false;
    for v in psi.iter_mut() {
        if *v < PSI_FLOOR {
            heywood = true;
            *v = PSI_FLOOR;
        }
    }
    if heywood {
        log::warn!("Heywood case in EFA: communality clamped to {}", 1.0 - PSI_FLOOR);
    }
    let unrotated = match options.extraction {
        Extraction::Minres => minres_loadings(r, &psi, n_factors),
        Extraction::Ml => ml_loadings(r, &psi, n_factors),
    };
    let communalities: Vec<f64> = (0..p)
        .map(|i| unrotated.row(i).norm_squared().min(1.0 - PSI_FLOOR))
        .collect();
    let rot = rotate(&unrotated, options.rotation, options.n_starts, options.seed);
    let implied = &rot.loadings * &rot.phi * rot.loadings.transpose();
    let mut objective = 0.0;
    for j in 0..p {
        for i in (j + 1)..p {
            objective += (r[(i, j)] - implied[(i, j)]).powi(2);
        }
    }
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect() };
    Ok(EfaResult {
        loadings: rows(&rot.loadings),
        rotation: options.rotation,
        factor_correlations: rows(&rot.phi),
        eigenvalues: sorted_eigenvalues(r),
        extraction: options.extraction,
        n_factors,
        uniquenesses: communalities.iter().map(|h| 1.0 - h).collect(),
        communalities,
        objective,
        heywood,
        converged: converged && rot.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::rotation::tucker_congruence;
    use crate::factor::FactorPopulation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_correlation_gives_null_loadings() {
        let r = DMatrix::identity(5, 5);
        let out = fit_efa_cor(&r, 2, &EfaOptions::default()).unwrap();
        assert!(out.loadings.iter().flatten().all(|v| v.abs() < 1e-6));
        assert!(out.objective < 1e-12);
        assert!((out.eigenvalues.iter().sum::<f64>() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_two_factor_recovery() {
        let pop = FactorPopulation::simple(2, 4, 0.8, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = pop.sample(2000, &mut rng);
        for extraction in [Extraction::Minres, Extraction::Ml] {
            for rotation in [Rotation::Oblimin, Rotation::Varimax] {
                let out = fit_efa(
                    &d,
                    2,
                    &EfaOptions {
                        extraction,
                        rotation,
                        ..EfaOptions::default()
                    },
                )
                .unwrap();
                let l = out.loading_matrix();
                // match each true factor to its best rotated column
                for f in 0..2 {
                    let best = (0..2)
                        .map(|j| tucker_congruence(l.column(j).as_slice(), pop.loadings.column(f).as_slice()))
                        .fold(f64::MIN, f64::max);
                    assert!(best > 0.95, "{extraction:?} {rotation:?} {best}");
                }
                assert!(!out.heywood);
                assert!(out.communalities.iter().all(|h| (0.0..=1.0).contains(h)));
            }
        }
    }

    #[test]
    fn minres_residual_shrinks_with_more_factors() {
        let pop = FactorPopulation::simple(3, 3, 0.6, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let d = pop.sample(500, &mut rng);
        let opts = EfaOptions {
            rotation: Rotation::None,
            ..EfaOptions::default()
        };
        let objs: Vec<f64> = (1..=4).map(|m| fit_efa(&d, m, &opts).unwrap().objective).collect();
        for w in objs.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{objs:?}");
        }
    }

    #[test]
    fn rejects_bad_factor_counts() {
        let r = DMatrix::identity(3, 3);
        assert!(fit_efa_cor(&r, 0, &EfaOptions::default()).is_err());
        assert!(fit_efa_cor(&r, 3, &EfaOptions::default()).is_err());
    }
}
