use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use super::FactorError;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitIndices {
    pub cfi: f64,
    pub tli: f64,
    pub rmsea: f64,
    pub rmsea_ci: (f64, f64),
}

/// CFI, TLI and RMSEA with its 90% interval. `n_groups` multiplies the RMSEA
/// numerator.
pub fn fit_indices(
    chi2_m: f64,
    df_m: usize,
    chi2_b: f64,
    df_b: usize,
    n_total: usize,
    n_groups: usize,
) -> FitIndices {
    let dm = df_m as f64;
    let db = df_b as f64;
    let excess_m = (chi2_m - dm).max(0.0);
    let excess_b = chi2_b - db;
    // a saturated model reproduces the moments by construction
    let cfi = if df_m == 0 {
        1.0
    } else {
        1.0 - excess_m / excess_b.max(excess_m).max(EPS)
    };
    let tli = if df_m == 0 || df_b == 0 {
        1.0
    } else {
        let rb = chi2_b / db;
        let denom = rb - 1.0;
        if denom.abs() < EPS {
            1.0
        } else {
            (rb - chi2_m / dm) / denom
        }
    };
    let (rmsea, rmsea_ci) = if df_m == 0 {
        (0.0, (0.0, 0.0))
    } else {
        let scale = n_groups as f64 / (dm * n_total as f64);
        let r = (scale * excess_m).sqrt();
        let (lo, hi) = rmsea_ci(chi2_m, df_m, 0.90);
        (r, ((scale * lo).sqrt(), (scale * hi).sqrt()))
    };
    FitIndices {
        cfi,
        tli,
        rmsea,
        rmsea_ci,
    }
}

/// P(χ²_df(λ) ≤ x) as a Poisson mixture of central chi-squares, summed
/// outward from the Poisson mode.
pub fn noncentral_chi2_cdf(x: f64, df: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let central = |k: f64| gamma_lr(k / 2.0, x / 2.0);
    if lambda <= 0.0 {
        return central(df);
    }
    let half = lambda / 2.0;
    let weight = |j: f64| (-half + j * half.ln() - ln_gamma(j + 1.0)).exp();
    let mode = half.floor();
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut j = mode;
    loop {
        let w = weight(j);
        total += w * central(df + 2.0 * j);
        mass += w;
        if w < 1e-17 && j > mode {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = weight(j);
        total += w * central(df + 2.0 * j);
        mass += w;
        if w < 1e-17 {
            break;
        }
        j -= 1.0;
    }
    debug_assert!((mass - 1.0).abs() < 1e-8);
    total.clamp(0.0, 1.0)
}

/// Noncentrality bounds `(λ_lo, λ_hi)` of a two-sided `level` interval, found
/// by bisection on the noncentral chi-square CDF.
pub fn rmsea_ci(chi2: f64, df: usize, level: f64) -> (f64, f64) {
    let df = df as f64;
    let upper_p = 0.5 + level / 2.0;
    let lower_p = 0.5 - level / 2.0;
    (solve_lambda(chi2, df, upper_p), solve_lambda(chi2, df, lower_p))
}

/// λ with P(χ²_df(λ) ≤ chi2) = target, or 0 if the CDF at λ = 0 is already
/// below the target.
fn solve_lambda(chi2: f64, df: f64, target: f64) -> f64 {
    let cdf = |l: f64| noncentral_chi2_cdf(chi2, df, l);
    if cdf(0.0) <= target {
        return 0.0;
    }
    let mut hi = chi2.max(1.0);
    while cdf(hi) > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standardized root mean square residual. Residuals are scaled by the
/// observed standard deviations; mean residuals are included when `means`
/// (observed, implied) is given.
pub fn srmr(
    s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    means: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<f64, FactorError> {
    let p = s.nrows();
    let sd: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    if let Some(i) = sd.iter().position(|&v| !(v > 0.0)) {
        return Err(FactorError::DegenerateItem(i));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..p {
        for i in j..p {
            let r = (s[(i, j)] - sigma[(i, j)]) / (sd[i] * sd[j]);
            sum += r * r;
            count += 1;
        }
    }
    if let Some((obs, implied)) = means {
        for i in 0..p {
            let r = (obs[i] - implied[i]) / sd[i];
            sum += r * r;
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// Group-size weighted combination of per-group SRMR values.
pub fn srmr_multigroup(parts: &[(f64, usize)]) -> f64 {
    let n: usize = parts.iter().map(|&(_, n)| n).sum();
    parts.iter().map(|&(v, ng)| v * ng as f64 / n as f64).sum()
}
