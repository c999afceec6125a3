//! Satorra–Bentler type scaling of the ML test statistic.

use nalgebra::{DMatrix, DVector};

use super::cfa::Problem;
use super::linalg::{solve_spd_ridge, vech_pairs};

/// Asymptotic covariance of (x̄, vech S) from centered fourth moments.
pub(crate) fn gamma(data: &DMatrix<f64>, xbar: &DVector<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = data.shape();
    let pairs = vech_pairs(p);
    let q = p + pairs.len();
    let mut g = DMatrix::zeros(q, q);
    let mut z = DVector::zeros(q);
    for r in 0..n {
        for i in 0..p {
            z[i] = data[(r, i)] - xbar[i];
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            z[p + k] = z[i] * z[j] - s[(i, j)];
        }
        g.syger(1.0, &z, &z, 1.0);
    }
    g.fill_upper_triangle_with_lower_triangle();
    g / n as f64
}

/// c = tr(UΓ)/df with U = V − VΔ(ΔᵀVΔ)⁻¹ΔᵀV over the stacked groups.
pub(crate) fn scaling_factor(problem: &Problem, x: &DVector<f64>) -> f64 {
    let df = problem.df();
    if df == 0 {
        return 1.0;
    }
    let k = problem.n_free;
    let mut a = DMatrix::zeros(k, k);
    let mut b = DMatrix::zeros(k, k);
    let mut trace_vg = 0.0;
    for (gi, grp) in problem.groups.iter().enumerate() {
        let Some(v) = problem.weight(gi, x) else {
            return f64::NAN;
        };
        let jac = problem.jacobian(gi, x);
        let gam = gamma(&grp.data, &grp.xbar, &grp.s);
        let vg = &v * &gam;
        trace_vg += vg.trace();
        let vd = &v * &jac;
        a += (jac.transpose() * &vd) * grp.w;
        b += (vd.transpose() * &gam * &vd) * grp.w;
    }
    let mut correction = 0.0;
    for c in 0..k {
        let col = solve_spd_ridge(&a, &b.column(c).into_owned());
        correction += col[c];
    }
    (trace_vg - correction) / df as f64
}
