//! Gradient projection rotation: oblimin (γ = 0, quartimin) and varimax.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    None,
    #[default]
    Oblimin,
    Varimax,
}

impl std::str::FromStr for Rotation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Rotation::None),
            "oblimin" => Ok(Rotation::Oblimin),
            "varimax" => Ok(Rotation::Varimax),
            o => Err(format!("unknown rotation {o:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationResult {
    pub loadings: DMatrix<f64>,
    /// Identity for orthogonal rotations.
    pub phi: DMatrix<f64>,
    pub criterion: f64,
    pub converged: bool,
}

const EPS: f64 = 1e-8;
const MAX_ITER: usize = 1000;

/// Quartimin criterion and its gradient with respect to the loadings.
fn quartimin(l: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let l2 = l.map(|v| v * v);
    let m = l.ncols();
    let off = DMatrix::from_fn(m, m, |a, b| if a == b { 0.0 } else { 1.0 });
    let x = &l2 * off;
    let f = l2.component_mul(&x).sum() / 4.0;
    (f, l.component_mul(&x))
}

fn varimax(l: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let mut ql = l.map(|v| v * v);
    for j in 0..ql.ncols() {
        let mean = ql.column(j).mean();
        ql.column_mut(j).add_scalar_mut(-mean);
    }
    let f = -ql.norm_squared() / 4.0;
    (f, -l.component_mul(&ql))
}

fn normalize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut t = x.clone();
    for mut c in t.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    t
}

fn gpf_oblique(a: &DMatrix<f64>, t0: DMatrix<f64>) -> (DMatrix<f64>, f64, bool) {
    let mut t = t0;
    let loadings = |t: &DMatrix<f64>| -> Option<DMatrix<f64>> { Some(a * t.clone().try_inverse()?.transpose()) };
    let Some(mut l) = loadings(&t) else {
        return (t, f64::INFINITY, false);
    };
    let (mut f, mut gq) = quartimin(&l);
    let grad = |l: &DMatrix<f64>, gq: &DMatrix<f64>, t: &DMatrix<f64>| -> DMatrix<f64> {
        let ti = t.clone().try_inverse().expect("invertible rotation");
        -(l.transpose() * gq * ti).transpose()
    };
    let mut g = grad(&l, &gq, &t);
    let mut al = 1.0;
    for _ in 0..MAX_ITER {
        let colsums: Vec<f64> = (0..t.ncols()).map(|j| t.column(j).dot(&g.column(j))).collect();
        let mut gp = g.clone();
        for j in 0..t.ncols() {
            let tc = t.column(j) * colsums[j];
            gp.column_mut(j).axpy(-1.0, &tc, 1.0);
        }
        let s = gp.norm();
        if s < EPS {
            return (t, f, true);
        }
        al *= 2.0;
        let mut next = None;
        for _ in 0..11 {
            let tt = normalize_columns(&(&t - &gp * al));
            if let Some(lt) = loadings(&tt) {
                let (ft, gqt) = quartimin(&lt);
                if f - ft > 0.5 * s * s * al {
                    next = Some((tt, lt, ft, gqt));
                    break;
                }
                next = Some((tt, lt, ft, gqt));
            }
            al /= 2.0;
        }
        let Some((tt, lt, ft, gqt)) = next else {
            return (t, f, false);
        };
        if ft > f {
            // no descent possible at any step size tried
            return (t, f, s < 1e-5);
        }
        t = tt;
        l = lt;
        f = ft;
        gq = gqt;
        g = grad(&l, &gq, &t);
    }
    (t, f, false)
}

fn gpf_orthogonal(a: &DMatrix<f64>, t0: DMatrix<f64>) -> (DMatrix<f64>, f64, bool) {
    let mut t = t0;
    let (mut f, gq) = varimax(&(a * &t));
    let mut g = a.transpose() * gq;
    let mut al = 1.0;
    for _ in 0..MAX_ITER {
        let mm = t.transpose() * &g;
        let sym = (&mm + mm.transpose()) * 0.5;
        let gp = &g - &t * sym;
        let s = gp.norm();
        if s < EPS {
            return (t, f, true);
        }
        al *= 2.0;
        let mut next = None;
        for _ in 0..11 {
            let x = &t - &gp * al;
            let svd = x.svd(true, true);
            let tt = svd.u.expect("u") * svd.v_t.expect("v_t");
            let (ft, gqt) = varimax(&(a * &tt));
            let ok = ft < f - 0.5 * s * s * al;
            next = Some((tt, ft, gqt));
            if ok {
                break;
            }
            al /= 2.0;
        }
        let (tt, ft, gqt) = next.expect("at least one trial");
        if ft > f {
            return (t, f, s < 1e-5);
        }
        t = tt;
        f = ft;
        g = a.transpose() * gqt;
    }
    (t, f, false)
}

fn random_orthogonal(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let z = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(rng));
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Reflects factors to positive column sums and orders them by decreasing
/// sum of squared loadings.
fn canonical(l: DMatrix<f64>, phi: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = l.ncols();
    let signs: Vec<f64> = (0..m).map(|j| if l.column(j).sum() < 0.0 { -1.0 } else { 1.0 }).collect();
    let ss: Vec<f64> = (0..m).map(|j| l.column(j).norm_squared()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| ss[b].total_cmp(&ss[a]));
    let lo = DMatrix::from_fn(l.nrows(), m, |i, j| l[(i, order[j])] * signs[order[j]]);
    let po = DMatrix::from_fn(m, m, |a, b| phi[(order[a], order[b])] * signs[order[a]] * signs[order[b]]);
    (lo, po)
}

/// Rotates an unrotated loading matrix. The best criterion over the identity
/// start and `n_starts` seeded random orthogonal starts is kept.
pub fn rotate(a: &DMatrix<f64>, rotation: Rotation, n_starts: usize, seed: u64) -> RotationResult {
    let m = a.ncols();
    if rotation == Rotation::None || m < 2 {
        let (l, phi) = canonical(a.clone(), DMatrix::identity(m, m));
        return RotationResult {
            loadings: l,
            phi,
            criterion: 0.0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(DMatrix<f64>, f64, bool)> = None;
    for k in 0..=n_starts {
        let t0 = if k == 0 { DMatrix::identity(m, m) } else { random_orthogonal(m, &mut rng) };
        let run = match rotation {
            Rotation::Oblimin => gpf_oblique(a, t0),
            Rotation::Varimax => gpf_orthogonal(a, t0),
            Rotation::None => unreachable!(),
        };
        if best.as_ref().is_none_or(|b| run.1 < b.1 - 1e-12) {
            best = Some(run);
        }
    }
    let (t, f, converged) = best.expect("identity start always runs");
    let (l, phi) = match rotation {
        Rotation::Oblimin => (a * t.clone().try_inverse().expect("invertible").transpose(), t.transpose() * &t),
        _ => (a * &t, DMatrix::identity(m, m)),
    };
    let (loadings, phi) = canonical(l, phi);
    RotationResult {
        loadings,
        phi,
        criterion: f,
        converged,
    }
}

/// Tucker's congruence coefficient between two loading vectors.
pub fn tucker_congruence(x: &[f64], y: &[f64]) -> f64 {
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let yy: f64 = y.iter().map(|a| a * a).sum();
    xy / (xx * yy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_pattern() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            6,
            2,
            &[0.8, 0.0, 0.7, 0.1, 0.75, 0.0, 0.0, 0.8, 0.1, 0.7, 0.0, 0.6],
        )
    }

    #[test]
    fn varimax_recovers_rotated_simple_structure() {
        let truth = clean_pattern();
        let c = 0.6f64.cos();
        let s = 0.6f64.sin();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let mixed = &truth * rot;
        let out = rotate(&mixed, Rotation::Varimax, 10, 1);
        assert!(out.converged);
        for j in 0..2 {
            let tc = tucker_congruence(out.loadings.column(j).as_slice(), truth.column(j).as_slice());
            assert!(tc > 0.99, "{tc}");
        }
        // orthogonal rotation preserves communalities
        for i in 0..6 {
            assert!((out.loadings.row(i).norm() - truth.row(i).norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn oblimin_finds_correlated_factors() {
        let pattern = DMatrix::from_row_slice(6, 2, &[0.8, 0.0, 0.7, 0.0, 0.75, 0.0, 0.0, 0.8, 0.0, 0.7, 0.0, 0.6]);
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        // an unrotated solution reproducing the same common covariance
        let common = &pattern * &phi * pattern.transpose();
        let (vals, vecs) = crate::factor::linalg::sorted_eigen(&common);
        let a = DMatrix::from_fn(6, 2, |i, j| vecs[(i, j)] * vals[j].sqrt());
        let out = rotate(&a, Rotation::Oblimin, 30, 2);
        assert!(out.converged);
        assert!(out.criterion < 1e-10);
        assert!((&out.loadings - &pattern).amax() < 1e-5);
        assert!((out.phi[(0, 1)] - 0.4).abs() < 1e-5);
        let reproduced = &out.loadings * &out.phi * out.loadings.transpose();
        assert!((reproduced - common).amax() < 1e-10);
    }

    #[test]
    fn congruence_basics() {
        assert!((tucker_congruence(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
        assert!(tucker_congruence(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-15);
    }
}
