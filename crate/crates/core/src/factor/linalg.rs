//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Inverse and log-determinant of a symmetric positive definite matrix.
/// `None` when the Cholesky factorization fails.
pub fn spd_inverse_logdet(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky()?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return None;
    }
    Some((chol.inverse(), logdet))
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Row-major `(i, j)` pairs with `i >= j`, the vech ordering used throughout.
pub fn vech_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for i in j..p {
            out.push((i, j));
        }
    }
    out
}

pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let pairs = vech_pairs(m.nrows());
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| m[(i, j)]))
}

/// Correlation matrix from a covariance matrix.
pub fn cov_to_cor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] / (sd[i] * sd[j])
        }
    })
}

/// Symmetrizes in place to wash out round-off asymmetry.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solves `a x = b` for symmetric `a`, adding a growing ridge if `a` is not
/// positive definite.
pub fn solve_spd_ridge(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let scale = a.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max).max(1e-12);
    let mut ridge = 0.0;
    for _ in 0..40 {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            return chol.solve(b);
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    b.clone() / scale
}
