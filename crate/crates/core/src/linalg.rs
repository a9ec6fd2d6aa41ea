//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::{Matrix, Vector};
use nalgebra::SymmetricEigen;

/// Eigen-decomposition of the symmetric part of `a`.
pub fn sym_eigen(a: &Matrix) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Largest absolute entry of `a - a^T`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(a).eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_max_eigenvalue(a: &Matrix) -> f64 {
    sym_eigen(a).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(a: &Matrix) -> f64 {
    sym_eigen(a).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `exp(-t A) v` for symmetric `A`.
pub fn sym_expm_neg_apply(a: &Matrix, t: f64, v: &Vector) -> Vector {
    let eig = sym_eigen(a);
    let q = &eig.eigenvectors;
    let mut coords = q.transpose() * v;
    for (c, lam) in coords.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= (-t * lam).exp();
    }
    q * coords
}

/// Frobenius norm of a matrix.
pub fn frobenius(a: &Matrix) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
