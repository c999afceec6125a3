//! Quasi-Newton minimizer shared by the CFA and EFA fitters.

use nalgebra::{DMatrix, DVector};

use super::linalg::symmetrize;

pub(crate) trait Objective {
    /// `+inf` outside the admissible region.
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Positive definite curvature used to (re)start the inverse-Hessian
    /// approximation. Identity when `None`.
    fn curvature(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn inverse_curvature<O: Objective>(obj: &O, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    if let Some(mut h) = obj.curvature(x) {
        symmetrize(&mut h);
        let scale = h.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max).max(1e-12);
        let mut ridge = 0.0;
        for _ in 0..30 {
            let mut m = h.clone();
            for i in 0..n {
                m[(i, i)] += ridge;
            }
            if let Some(ch) = m.cholesky() {
                return ch.inverse();
            }
            ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
        }
    }
    DMatrix::identity(n, n)
}

/// BFGS with Armijo backtracking. The inverse Hessian restarts from the
/// objective's curvature whenever a step fails.
pub(crate) fn minimize<O: Objective>(obj: &O, x0: DVector<f64>, s: Settings) -> Outcome {
    let mut x = x0;
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut h = inverse_curvature(obj, &x);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = f.is_finite() && max_abs(&g) < s.grad_tol * 1e-2;
    while !converged && iterations < s.max_iter && f.is_finite() {
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = inverse_curvature(obj, &x);
            fresh = true;
            d = -(&h * &g);
            slope = g.dot(&d);
            if !(slope < 0.0) {
                d = -g.clone();
                slope = g.dot(&d);
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * t;
            let fnew = obj.value(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                converged = max_abs(&g) < s.grad_tol;
                break;
            }
            h = inverse_curvature(obj, &x);
            fresh = true;
            continue;
        };
        let gn = obj.gradient(&xn);
        let step = &xn - &x;
        let yk = &gn - &g;
        let sy = step.dot(&yk);
        let df = (f - fnew).abs();
        x = xn;
        f = fnew;
        g = gn;
        if sy > 1e-12 * step.norm() * yk.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &yk;
            let yhy = yk.dot(&hy);
            // H+ = H - rho (s yᵀH + H y sᵀ) + (rho² yᵀHy + rho) s sᵀ
            h -= (&step * hy.transpose() + &hy * step.transpose()) * rho;
            h += (&step * step.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        if max_abs(&g) < s.grad_tol && df <= s.f_tol * (1.0 + f.abs()) {
            converged = true;
        }
    }
    Outcome {
        x,
        value: f,
        iterations,
        converged,
    }
}

/// Central-difference gradient.
pub(crate) fn numeric_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &DVector<f64>) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), Settings::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn numeric_gradient_matches() {
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let g = numeric_gradient(|v| Rosenbrock.value(v), &x, 1e-6);
        assert!((g - Rosenbrock.gradient(&x)).norm() < 1e-5);
    }
}
