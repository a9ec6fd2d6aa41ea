//! Stochastic gradient estimators and their exact covariances.
//!
//! Mini-batches are drawn independently, uniformly and with replacement
//! from the `N` components. The covariances here are computed by explicit
//! loops over all components, never estimated by sampling, because the
//! integrators use them as the exact volatility of the diffusion models.

use rand::Rng;

use crate::error::{check_dim, precondition, Error, Result};
use crate::linalg;
use crate::problems::FiniteSumProblem;
use crate::{Matrix, Vector};

/// One draw of a stochastic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub value: Vector,
    /// Sampled component indices, with multiplicity.
    pub batch_indices: Vec<usize>,
}

/// One-sample covariance `Sigma` together with its principal square root.
#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub sigma_matrix: Matrix,
    pub sqrt_matrix: Matrix,
    /// `|sigma sigma^T|_s`, i.e. the largest eigenvalue of `Sigma`.
    pub spectral_norm: f64,
}

fn draw_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Vec<usize> {
    (0..b).map(|_| rng.random_range(0..n)).collect()
}

/// Mini-batch estimator: mean of `b` component gradients.
pub fn mb_estimate<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    x: &Vector,
    b: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if b == 0 {
        return Err(precondition("batch size must be at least 1"));
    }
    check_dim(problem.dim(), x.len())?;
    let batch_indices = draw_batch(problem.n_components(), b, rng);
    let mut value = Vector::zeros(problem.dim());
    for &i in &batch_indices {
        value += problem.component_gradient(i, x);
    }
    value /= b as f64;
    Ok(GradientEstimate { value, batch_indices })
}

/// Pivot of the variance-reduced estimator with its cached full gradient.
#[derive(Debug, Clone)]
pub struct VrAnchor {
    pub point: Vector,
    pub full_gradient: Vector,
}

impl VrAnchor {
    pub fn new(problem: &FiniteSumProblem, point: Vector) -> Result<Self> {
        let full_gradient = problem.full_gradient(&point)?;
        Ok(VrAnchor { point, full_gradient })
    }
}

/// Variance-reduced (SVRG) estimator
/// `(1/b) sum [grad f_i(x) - grad f_i(pivot) + grad f(pivot)]`.
pub fn vr_estimate<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    x: &Vector,
    pivot: &Vector,
    b: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let anchor = VrAnchor::new(problem, pivot.clone())?;
    vr_estimate_anchored(problem, x, &anchor, b, rng)
}

/// Same as [`vr_estimate`] with the pivot's full gradient already computed.
pub fn vr_estimate_anchored<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    x: &Vector,
    anchor: &VrAnchor,
    b: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if b == 0 {
        return Err(precondition("batch size must be at least 1"));
    }
    check_dim(problem.dim(), x.len())?;
    check_dim(problem.dim(), anchor.point.len())?;
    let batch_indices = draw_batch(problem.n_components(), b, rng);
    let mut value = Vector::zeros(problem.dim());
    for &i in &batch_indices {
        value += problem.component_gradient(i, x) - problem.component_gradient(i, &anchor.point);
    }
    value /= b as f64;
    value += &anchor.full_gradient;
    Ok(GradientEstimate { value, batch_indices })
}

fn covariance_report(sigma_matrix: Matrix) -> Result<CovarianceReport> {
    let sqrt_matrix = principal_sqrt(&sigma_matrix)?;
    let spectral_norm = linalg::sym_max_eigenvalue(&sigma_matrix).max(0.0);
    Ok(CovarianceReport { sigma_matrix, sqrt_matrix, spectral_norm })
}

/// Exact `Sigma_MB(x) = (1/N) sum (grad f(x) - grad f_i(x))(...)^T`.
pub fn sigma_mb_matrix(problem: &FiniteSumProblem, x: &Vector) -> Result<Matrix> {
    let g = problem.full_gradient(x)?;
    let d = problem.dim();
    let mut sigma = Matrix::zeros(d, d);
    for i in 0..problem.n_components() {
        let e = &g - problem.component_gradient(i, x);
        sigma.ger(1.0, &e, &e, 1.0);
    }
    Ok(sigma / problem.n_components() as f64)
}

pub fn sigma_mb(problem: &FiniteSumProblem, x: &Vector) -> Result<CovarianceReport> {
    covariance_report(sigma_mb_matrix(problem, x)?)
}

/// Exact `Sigma_VR(x, y)` from its defining sum.
pub fn sigma_vr_matrix(problem: &FiniteSumProblem, x: &Vector, y: &Vector) -> Result<Matrix> {
    check_dim(problem.dim(), y.len())?;
    let gx = problem.full_gradient(x)?;
    let gy = problem.full_gradient(y)?;
    let shift = &gy - &gx;
    let d = problem.dim();
    let mut sigma = Matrix::zeros(d, d);
    for i in 0..problem.n_components() {
        let e = problem.component_gradient(i, x) - problem.component_gradient(i, y) + &shift;
        sigma.ger(1.0, &e, &e, 1.0);
    }
    Ok(sigma / problem.n_components() as f64)
}

pub fn sigma_vr(problem: &FiniteSumProblem, x: &Vector, y: &Vector) -> Result<CovarianceReport> {
    covariance_report(sigma_vr_matrix(problem, x, y)?)
}

/// Principal square root `V D^{1/2} V^T` of a symmetric PSD matrix.
///
/// Eigenvalues in `[-1e-8, 0)` (relative to the matrix scale) are round-off
/// and are clamped to zero before rooting; anything more negative is an error.
pub fn principal_sqrt(a: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let scale = 1.0_f64.max(a.amax());
    if linalg::asymmetry(a) > 1e-10 * scale {
        return Err(precondition("principal_sqrt needs a symmetric matrix"));
    }
    if a.iter().all(|v| *v == 0.0) {
        return Ok(a.clone());
    }
    let eig = linalg::sym_eigen(a);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * scale {
        return Err(Error::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * Matrix::from_diagonal(&roots) * v.transpose())
}

/// `max_x lambda_max(Sigma_MB(x))` over the given points.
pub fn estimate_sigma_star_sq(problem: &FiniteSumProblem, sample_points: &[Vector]) -> Result<f64> {
    if sample_points.is_empty() {
        return Err(precondition("need at least one sample point"));
    }
    let mut best = 0.0_f64;
    for x in sample_points {
        let sigma = sigma_mb_matrix(problem, x)?;
        best = best.max(linalg::sym_max_eigenvalue(&sigma));
    }
    Ok(best)
}
