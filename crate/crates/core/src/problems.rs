//! Finite-sum objectives `f = (1/N) sum_i f_i` with analytic gradients.
//!
//! The quadratic families here have state-independent (or exactly known)
//! gradient covariance, which gives closed-form oracles for the estimator and
//! integrator tests. Regularity constants are declared by the constructor or
//! the caller and can be spot-checked with [`verify_class`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, precondition, Error, Result};
use crate::linalg;
use crate::{Matrix, Vector};

/// One summand `f_i` of a finite-sum objective.
pub trait Component: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
}

#[derive(Debug, Clone)]
pub enum Curvature {
    Diagonal(Vector),
    Dense(Matrix),
}

impl Curvature {
    fn apply(&self, v: &Vector) -> Vector {
        match self {
            Curvature::Diagonal(diag) => diag.component_mul(v),
            Curvature::Dense(m) => m * v,
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            Curvature::Diagonal(diag) => Matrix::from_diagonal(diag),
            Curvature::Dense(m) => m.clone(),
        }
    }
}

/// `f_i(x) = 1/2 <x - c, A (x - c)> + <l, x - c>`.
#[derive(Debug, Clone)]
pub struct QuadraticComponent {
    pub center: Vector,
    pub curvature: Curvature,
    pub linear: Vector,
}

impl Component for QuadraticComponent {
    fn value(&self, x: &Vector) -> f64 {
        let dx = x - &self.center;
        0.5 * dx.dot(&self.curvature.apply(&dx)) + self.linear.dot(&dx)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let dx = x - &self.center;
        self.curvature.apply(&dx) + &self.linear
    }
}

/// Declared regularity constants of a problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConstants {
    /// Lipschitz constant of every component gradient.
    pub l: f64,
    #[serde(default)]
    pub mu_pl: Option<f64>,
    #[serde(default)]
    pub mu_rsi: Option<f64>,
    #[serde(default)]
    pub tau_wqc: Option<f64>,
    /// Uniform bound on the largest eigenvalue of the one-sample covariance.
    #[serde(default)]
    pub sigma_star_sq: Option<f64>,
    /// Lipschitz constant of the centred component gradients
    /// `grad f_i - grad f`; bounds the variance-reduced covariance. Falls
    /// back to `l` when absent.
    #[serde(default)]
    pub l_variance: Option<f64>,
    #[serde(default)]
    pub f_star: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => {
                    Err(precondition(format!("constant {name} must be positive and finite, got {x}")))
                }
                _ => Ok(()),
            }
        };
        positive("L", Some(self.l))?;
        positive("mu_pl", self.mu_pl)?;
        positive("mu_rsi", self.mu_rsi)?;
        positive("tau_wqc", self.tau_wqc)?;
        positive("l_variance", self.l_variance)?;
        if let Some(s) = self.sigma_star_sq {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(precondition(format!("sigma_star_sq must be nonnegative, got {s}")));
            }
        }
        if let Some(mu) = self.mu_pl {
            if mu > self.l * (1.0 + 1e-12) {
                return Err(precondition(format!("mu_pl = {mu} exceeds L = {}", self.l)));
            }
        }
        if self.mu_rsi.is_some() && self.mu_pl.is_none() {
            return Err(precondition("mu_rsi declared without mu_pl (RSI implies PL)"));
        }
        Ok(())
    }

    pub fn mu_pl(&self) -> Result<f64> {
        self.mu_pl.ok_or(Error::MissingConstant("mu_pl"))
    }

    pub fn mu_rsi(&self) -> Result<f64> {
        self.mu_rsi.ok_or(Error::MissingConstant("mu_rsi"))
    }

    pub fn tau_wqc(&self) -> Result<f64> {
        self.tau_wqc.ok_or(Error::MissingConstant("tau_wqc"))
    }

    pub fn sigma_star_sq(&self) -> Result<f64> {
        self.sigma_star_sq.ok_or(Error::MissingConstant("sigma_star_sq"))
    }

    pub fn l_variance(&self) -> f64 {
        self.l_variance.unwrap_or(self.l)
    }
}

/// What is known about the shape of `f` beyond its components.
#[derive(Debug, Clone)]
pub enum Structure {
    General,
    /// `f(x) - f* = 1/2 <x - x*, H (x - x*)>` with the given mean Hessian.
    Quadratic { hessian: Matrix },
}

#[derive(Clone)]
pub struct FiniteSumProblem {
    dim: usize,
    components: Vec<Arc<dyn Component>>,
    x_star: Vector,
    constants: ProblemConstants,
    structure: Structure,
    /// Diagonal of a diagonal mean Hessian, for O(d) gradients.
    hessian_diag: Option<Vector>,
}

impl fmt::Debug for FiniteSumProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteSumProblem")
            .field("dim", &self.dim)
            .field("n_components", &self.components.len())
            .field("x_star", &self.x_star.as_slice())
            .field("constants", &self.constants)
            .finish()
    }
}

impl FiniteSumProblem {
    /// Builds a problem from arbitrary components. `x_star` must be a
    /// stationary point of the average.
    pub fn new(
        components: Vec<Arc<dyn Component>>,
        x_star: Vector,
        constants: ProblemConstants,
        structure: Structure,
    ) -> Result<Self> {
        let dim = x_star.len();
        if dim == 0 {
            return Err(precondition("dimension must be at least 1"));
        }
        if components.is_empty() {
            return Err(precondition("a finite-sum problem needs at least one component"));
        }
        constants.validate()?;
        if let Structure::Quadratic { hessian } = &structure {
            check_dim(dim, hessian.nrows())?;
            check_dim(dim, hessian.ncols())?;
        }
        let hessian_diag = match &structure {
            Structure::Quadratic { hessian } if is_diagonal(hessian) => Some(hessian.diagonal()),
            _ => None,
        };
        let problem = FiniteSumProblem { dim, components, x_star, constants, structure, hessian_diag };
        problem.check_structure()?;
        let g = problem.component_mean_gradient(&problem.x_star);
        check_dim(dim, g.len())?;
        let scale = 1.0 + problem.x_star.norm();
        if g.norm() > 1e-10 * scale {
            return Err(precondition(format!(
                "x_star is not stationary: |grad f(x_star)| = {:e}",
                g.norm()
            )));
        }
        Ok(problem)
    }

    /// Compares the declared quadratic structure with the components along
    /// every coordinate direction.
    fn check_structure(&self) -> Result<()> {
        let Structure::Quadratic { hessian } = &self.structure else {
            return Ok(());
        };
        let scale = 1.0 + hessian.amax();
        let f0 = self.component_mean_value(&self.x_star);
        if (f0 - self.constants.f_star).abs() > 1e-10 * (1.0 + f0.abs()) {
            return Err(precondition(format!(
                "declared f_star = {} but f(x_star) = {f0}",
                self.constants.f_star
            )));
        }
        for j in 0..self.dim {
            let mut x = self.x_star.clone();
            x[j] += 1.0;
            let slow = self.component_mean_gradient(&x) - self.component_mean_gradient(&self.x_star);
            if (slow - hessian.column(j)).amax() > 1e-10 * scale {
                return Err(precondition("declared Hessian does not match the components"));
            }
        }
        Ok(())
    }

    fn component_mean_gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim);
        for c in &self.components {
            g += c.gradient(x);
        }
        g / self.components.len() as f64
    }

    fn component_mean_value(&self, x: &Vector) -> f64 {
        let sum: f64 = self.components.iter().map(|c| c.value(x)).sum();
        sum / self.components.len() as f64
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn x_star(&self) -> &Vector {
        &self.x_star
    }

    pub fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// Replaces the declared constants (after validating them).
    pub fn with_constants(mut self, constants: ProblemConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        self.check_structure()?;
        Ok(self)
    }

    /// Mean Hessian when the problem is a known quadratic.
    pub fn hessian(&self) -> Option<&Matrix> {
        match &self.structure {
            Structure::Quadratic { hessian } => Some(hessian),
            Structure::General => None,
        }
    }

    /// `mu` when `f - f* = (mu/2) |x - x*|^2`.
    pub fn isotropic_curvature(&self) -> Option<f64> {
        let h = self.hessian()?;
        let mu = h[(0, 0)];
        let tol = 1e-14 * (1.0 + mu.abs());
        for i in 0..self.dim {
            for j in 0..self.dim {
                let expect = if i == j { mu } else { 0.0 };
                if (h[(i, j)] - expect).abs() > tol {
                    return None;
                }
            }
        }
        Some(mu)
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        match (&self.structure, &self.hessian_diag) {
            (_, Some(diag)) => {
                let dx = x - &self.x_star;
                Ok(self.constants.f_star + 0.5 * dx.iter().zip(diag.iter()).map(|(v, l)| l * v * v).sum::<f64>())
            }
            (Structure::Quadratic { hessian }, None) => {
                let dx = x - &self.x_star;
                Ok(self.constants.f_star + 0.5 * dx.dot(&(hessian * &dx)))
            }
            (Structure::General, None) => Ok(self.component_mean_value(x)),
        }
    }

    /// `f(x) - f*`.
    pub fn gap(&self, x: &Vector) -> Result<f64> {
        Ok(self.value(x)? - self.constants.f_star)
    }

    pub fn full_gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        Ok(match (&self.structure, &self.hessian_diag) {
            (_, Some(diag)) => (x - &self.x_star).component_mul(diag),
            (Structure::Quadratic { hessian }, None) => hessian * (x - &self.x_star),
            (Structure::General, None) => self.component_mean_gradient(x),
        })
    }

    /// Gradient of component `i` (zero based). Unchecked dimension: callers
    /// inside the crate validate `x` once per step.
    pub fn component_gradient(&self, i: usize, x: &Vector) -> Vector {
        self.components[i].gradient(x)
    }

    pub fn component_value(&self, i: usize, x: &Vector) -> f64 {
        self.components[i].value(x)
    }

    /// Largest observed ratio `|grad f_i(x) - grad f_i(y)| / (L |x - y|)` over
    /// random pairs in a ball of the given radius around `x_star`.
    pub fn max_lipschitz_ratio<R: Rng + ?Sized>(&self, n_pairs: usize, radius: f64, rng: &mut R) -> f64 {
        let mut worst = 0.0_f64;
        for _ in 0..n_pairs {
            let x = sample_ball(&self.x_star, radius, rng);
            let y = sample_ball(&self.x_star, radius, rng);
            let dist = (&x - &y).norm();
            if dist == 0.0 {
                continue;
            }
            for i in 0..self.n_components() {
                let diff = (self.component_gradient(i, &x) - self.component_gradient(i, &y)).norm();
                worst = worst.max(diff / (self.constants.l * dist));
            }
        }
        worst
    }
}

fn quadratic_components(
    x_star: &Vector,
    curvatures: Vec<Curvature>,
    linears: Vec<Vector>,
) -> Vec<Arc<dyn Component>> {
    curvatures
        .into_iter()
        .zip(linears)
        .map(|(curvature, linear)| {
            Arc::new(QuadraticComponent { center: x_star.clone(), curvature, linear }) as Arc<dyn Component>
        })
        .collect()
}

fn check_zero_sum(vectors: &[Vector], dim: usize) -> Result<()> {
    let mut sum = Vector::zeros(dim);
    let mut scale = 0.0_f64;
    for v in vectors {
        check_dim(dim, v.len())?;
        sum += v;
        scale = scale.max(v.amax());
    }
    if sum.amax() > 1e-12 * (1.0 + scale) * vectors.len() as f64 {
        return Err(precondition(format!(
            "noise vectors must sum to zero (|sum| = {:e}); a nonzero sum biases the estimator",
            sum.norm()
        )));
    }
    Ok(())
}

fn one_sample_covariance_of(vectors: &[Vector], dim: usize) -> Matrix {
    let mut sigma = Matrix::zeros(dim, dim);
    for c in vectors {
        sigma += c * c.transpose();
    }
    sigma / vectors.len() as f64
}

/// `f_i(x) = 1/2 <x - x*, H (x - x*)> + <c_i, x - x*>` with `H = diag(eigenvalues)`.
///
/// The gradient covariance is `(1/N) sum c_i c_i^T` at every point. Constants
/// are filled in from the spectrum: `L = max |lambda|`; `mu_pl = min lambda`,
/// `mu_rsi = 2 min lambda` and `tau_wqc = 1` when the spectrum is positive.
pub fn make_perturbed_quadratic(
    eigenvalues: &[f64],
    x_star: Vector,
    noise_vectors: Vec<Vector>,
) -> Result<FiniteSumProblem> {
    let dim = x_star.len();
    check_dim(dim, eigenvalues.len())?;
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(precondition("eigenvalues must be finite"));
    }
    if noise_vectors.is_empty() {
        return Err(precondition("at least one noise vector (component) is required"));
    }
    check_zero_sum(&noise_vectors, dim)?;

    let diag = Vector::from_column_slice(eigenvalues);
    let l = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let sigma = one_sample_covariance_of(&noise_vectors, dim);
    let sigma_star_sq = linalg::sym_max_eigenvalue(&sigma).max(0.0);
    let positive = min > 0.0;
    let constants = ProblemConstants {
        l: if l > 0.0 { l } else { 1.0 },
        mu_pl: positive.then_some(min),
        mu_rsi: positive.then_some(2.0 * min),
        tau_wqc: (min >= 0.0).then_some(1.0),
        sigma_star_sq: Some(sigma_star_sq),
        l_variance: None,
        f_star: 0.0,
    };
    let n = noise_vectors.len();
    let components =
        quadratic_components(&x_star, vec![Curvature::Diagonal(diag.clone()); n], noise_vectors);
    FiniteSumProblem::new(components, x_star, constants, Structure::Quadratic {
        hessian: Matrix::from_diagonal(&diag),
    })
}

/// Deterministic `f(x) = (mu/2) |x|^2` with a single component.
pub fn isotropic_quadratic(mu: f64, dim: usize) -> Result<FiniteSumProblem> {
    make_perturbed_quadratic(&vec![mu; dim], Vector::zeros(dim), vec![Vector::zeros(dim)])
}

/// `f(x) = (mu/2) |x|^2` split into `2 d` components `+-s e_j` so that the
/// one-sample covariance is exactly `sigma_star_sq * I`.
pub fn isotropic_with_noise(mu: f64, dim: usize, sigma_star_sq: f64) -> Result<FiniteSumProblem> {
    if !(sigma_star_sq >= 0.0) {
        return Err(precondition("sigma_star_sq must be nonnegative"));
    }
    let s = (dim as f64 * sigma_star_sq).sqrt();
    let mut noise = Vec::with_capacity(2 * dim);
    for j in 0..dim {
        for sign in [1.0, -1.0] {
            let mut c = Vector::zeros(dim);
            c[j] = sign * s;
            noise.push(c);
        }
    }
    make_perturbed_quadratic(&vec![mu; dim], Vector::zeros(dim), noise)
}

fn is_diagonal(m: &Matrix) -> bool {
    m.iter().enumerate().all(|(idx, v)| idx % m.nrows() == idx / m.nrows() || *v == 0.0)
}

/// `f_1(x) = 1/2 (x - 1)^2`, `f_2(x) = 1/2 (x + 1)^2`.
pub fn two_point_1d() -> Result<FiniteSumProblem> {
    make_perturbed_quadratic(
        &[1.0],
        Vector::zeros(1),
        vec![Vector::from_element(1, -1.0), Vector::from_element(1, 1.0)],
    )
}

/// Quadratic components with individual Hessians:
/// `f_i(x) = 1/2 <x - x*, A_i (x - x*)> + <c_i, x - x*>`.
///
/// Declared constants: `L = max |A_i|`, `l_variance = max |A_i - H|` with
/// `H` the mean Hessian, and PL/RSI/WQC from the spectrum of `H`.
pub fn make_component_quadratic(
    hessians: Vec<Matrix>,
    linears: Vec<Vector>,
    x_star: Vector,
) -> Result<FiniteSumProblem> {
    let dim = x_star.len();
    if hessians.is_empty() || hessians.len() != linears.len() {
        return Err(precondition("need one Hessian and one linear term per component"));
    }
    for a in &hessians {
        check_dim(dim, a.nrows())?;
        check_dim(dim, a.ncols())?;
        if linalg::asymmetry(a) > 1e-12 * (1.0 + a.amax()) {
            return Err(precondition("component Hessians must be symmetric"));
        }
    }
    check_zero_sum(&linears, dim)?;
    let n = hessians.len() as f64;
    let mean = hessians.iter().fold(Matrix::zeros(dim, dim), |acc, a| acc + a) / n;
    let l = hessians.iter().map(linalg::sym_spectral_norm).fold(0.0, f64::max);
    let l_var = hessians.iter().map(|a| linalg::sym_spectral_norm(&(a - &mean))).fold(0.0, f64::max);
    let min = linalg::sym_min_eigenvalue(&mean);
    let positive = min > 0.0;
    let constants = ProblemConstants {
        l: if l > 0.0 { l } else { 1.0 },
        mu_pl: positive.then_some(min),
        mu_rsi: positive.then_some(2.0 * min),
        tau_wqc: (min >= 0.0).then_some(1.0),
        sigma_star_sq: None,
        l_variance: (l_var > 0.0).then_some(l_var),
        f_star: 0.0,
    };
    let curvatures = hessians.into_iter().map(Curvature::Dense).collect();
    let components = quadratic_components(&x_star, curvatures, linears);
    FiniteSumProblem::new(components, x_star, constants, Structure::Quadratic { hessian: mean })
}

/// Strongly convex quadratic whose components differ only in curvature:
/// `A_i = diag(mean_eigenvalues) +- deviation * P_k` with `P_0` the
/// alternating-sign diagonal and `P_1` the symmetric swap of coordinate pairs.
/// Each `|P_k| = 1`, so `l_variance = deviation`. Used for variance-reduction
/// experiments, where additive noise would cancel.
pub fn rsi_mixture(mean_eigenvalues: &[f64], deviation: f64) -> Result<FiniteSumProblem> {
    let dim = mean_eigenvalues.len();
    if dim == 0 {
        return Err(precondition("dimension must be at least 1"));
    }
    if !(deviation >= 0.0) {
        return Err(precondition("deviation must be nonnegative"));
    }
    let mean = Matrix::from_diagonal(&Vector::from_column_slice(mean_eigenvalues));
    let alternating = Matrix::from_diagonal(&Vector::from_fn(dim, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }));
    let mut patterns = vec![alternating];
    if dim >= 2 {
        let mut swap = Matrix::zeros(dim, dim);
        for j in (0..dim - 1).step_by(2) {
            swap[(j, j + 1)] = 1.0;
            swap[(j + 1, j)] = 1.0;
        }
        if dim % 2 == 1 {
            swap[(dim - 1, dim - 1)] = 1.0;
        }
        patterns.push(swap);
    }
    let mut hessians = Vec::new();
    for p in &patterns {
        hessians.push(&mean + p * deviation);
        hessians.push(&mean - p * deviation);
    }
    let linears = vec![Vector::zeros(dim); hessians.len()];
    make_component_quadratic(hessians, linears, Vector::zeros(dim))
}

/// Exact `E[f(X(t)) - f*]` for the gradient flow model on
/// `f = (mu/2)|x - x*|^2` with constant isotropic volatility `sigma_star_sq I`
/// (an Ornstein–Uhlenbeck process):
/// `gap(x0) e^{-2 mu t} + (h d sigma_star_sq / 4)(1 - e^{-2 mu t})`.
pub fn expected_value_ou(
    problem: &FiniteSumProblem,
    x0: &Vector,
    h: f64,
    sigma_star_sq: f64,
    t: f64,
) -> Result<f64> {
    let mu = problem
        .isotropic_curvature()
        .ok_or_else(|| Error::UnsupportedProblem("closed form needs an isotropic quadratic".into()))?;
    if t < 0.0 {
        return Err(precondition("t must be nonnegative"));
    }
    let d = problem.dim() as f64;
    let decay = (-2.0 * mu * t).exp();
    let floor = h * d * sigma_star_sq / 4.0;
    Ok(problem.gap(x0)? * decay + floor * (-(-2.0 * mu * t).exp_m1()))
}

/// Function classes whose defining inequality can be spot-checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FunctionClass {
    Wqc,
    Pl,
    Rsi,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: FunctionClass,
    pub n_samples: usize,
    /// Smallest slack observed; negative values are violations.
    pub worst_slack: f64,
    pub worst_point: Vec<f64>,
    pub passed: bool,
}

/// Uniform sample from the ball of the given radius around `centre`.
pub fn sample_ball<R: Rng + ?Sized>(centre: &Vector, radius: f64, rng: &mut R) -> Vector {
    let d = centre.len();
    let dir = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
    let norm = dir.norm();
    if norm == 0.0 {
        return centre.clone();
    }
    let r: f64 = radius * rng.random::<f64>().powf(1.0 / d as f64);
    centre + dir * (r / norm)
}

/// Slack of a class inequality at `x`. Every class also requires
/// `f(x) >= f*` since `x*` is a global minimiser, and the slack reported is
/// the smaller of the two.
pub fn class_slack(problem: &FiniteSumProblem, class: FunctionClass, x: &Vector) -> Result<f64> {
    let c = problem.constants();
    let g = problem.full_gradient(x)?;
    let gap = problem.gap(x)?;
    let dx = x - problem.x_star();
    let slack = match class {
        FunctionClass::Wqc => g.dot(&dx) - c.tau_wqc()? * gap,
        FunctionClass::Pl => g.norm_squared() - 2.0 * c.mu_pl()? * gap,
        FunctionClass::Rsi => g.dot(&dx) - 0.5 * c.mu_rsi()? * dx.norm_squared(),
    };
    Ok(slack.min(gap))
}

/// Checks the class inequality at `n_samples` points drawn uniformly in a
/// ball around `x_star`. Passes iff the worst slack is `>= -1e-9`.
pub fn verify_class<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    class: FunctionClass,
    n_samples: usize,
    radius: f64,
    rng: &mut R,
) -> Result<ClassReport> {
    let c = problem.constants();
    match class {
        FunctionClass::Wqc => c.tau_wqc().map(|_| ())?,
        FunctionClass::Pl => c.mu_pl().map(|_| ())?,
        FunctionClass::Rsi => c.mu_rsi().map(|_| ())?,
    }
    if n_samples == 0 {
        return Err(precondition("n_samples must be positive"));
    }
    let mut worst_slack = f64::INFINITY;
    let mut worst_point = problem.x_star().clone();
    for _ in 0..n_samples {
        let x = sample_ball(problem.x_star(), radius, rng);
        let s = class_slack(problem, class, &x)?;
        if s < worst_slack {
            worst_slack = s;
            worst_point = x;
        }
    }
    Ok(ClassReport {
        class,
        n_samples,
        worst_slack,
        worst_point: worst_point.iter().cloned().collect(),
        passed: worst_slack >= -1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;

    #[test]
    fn isotropic_gradient() {
        let p = isotropic_quadratic(3.0, 2).unwrap();
        let g = p.full_gradient(&Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(g.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn gradient_vanishes_at_minimiser() {
        let p = make_perturbed_quadratic(
            &[1.0, 4.0],
            Vector::from_vec(vec![0.5, -2.0]),
            vec![Vector::from_vec(vec![1.0, 2.0]), Vector::from_vec(vec![-1.0, -2.0])],
        )
        .unwrap();
        assert!(p.full_gradient(p.x_star()).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn two_point_problem_gradient_at_zero() {
        let p = two_point_1d().unwrap();
        let x = Vector::zeros(1);
        let g1 = p.component_gradient(0, &x)[0];
        let g2 = p.component_gradient(1, &x)[0];
        assert_eq!(g1, -1.0);
        assert_eq!(g2, 1.0);
        assert_eq!(p.full_gradient(&x).unwrap()[0], (g1 + g2) / 2.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = isotropic_quadratic(1.0, 3).unwrap();
        assert!(matches!(
            p.full_gradient(&Vector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn nonzero_noise_sum_is_rejected() {
        let r = make_perturbed_quadratic(&[1.0], Vector::zeros(1), vec![Vector::from_element(1, 0.3)]);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_noise_problem_has_zero_volatility_bound() {
        let p = make_perturbed_quadratic(&[2.0, 2.0], Vector::zeros(2), vec![Vector::zeros(2); 3]).unwrap();
        assert_eq!(p.constants().sigma_star_sq, Some(0.0));
        assert_eq!(p.constants().l, 2.0);
        assert_eq!(p.constants().mu_pl, Some(2.0));
    }

    #[test]
    fn saddle_has_no_pl_constant() {
        let p = make_perturbed_quadratic(&[1.0, 2.0, -0.5], Vector::zeros(3), vec![Vector::zeros(3)]).unwrap();
        assert_eq!(p.constants().mu_pl, None);
        assert_eq!(p.constants().l, 2.0);
    }

    #[test]
    fn constants_validation() {
        let mut c = ProblemConstants { l: 1.0, mu_pl: Some(2.0), ..Default::default() };
        assert!(c.validate().is_err());
        c.mu_pl = None;
        c.mu_rsi = Some(1.0);
        assert!(c.validate().is_err());
        c.mu_pl = Some(0.5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn ou_closed_form_endpoints() {
        let p = isotropic_quadratic(2.0, 2).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(expected_value_ou(&p, &x0, 1e-4, 0.1, 0.0).unwrap(), 1.0);
        let far = expected_value_ou(&p, &x0, 1e-4, 0.1, 100.0).unwrap();
        assert!((far - 5e-6).abs() < 1e-18);
        let t1 = expected_value_ou(&p, &x0, 1e-4, 0.1, 1.0).unwrap();
        let e4 = (-4.0f64).exp();
        assert!((t1 - (e4 + 5e-6 * (1.0 - e4))).abs() < 1e-15);
    }

    #[test]
    fn ou_closed_form_rejects_anisotropic() {
        let p = make_perturbed_quadratic(&[1.0, 2.0], Vector::zeros(2), vec![Vector::zeros(2)]).unwrap();
        assert!(matches!(
            expected_value_ou(&p, &Vector::zeros(2), 1e-3, 0.1, 1.0),
            Err(Error::UnsupportedProblem(_))
        ));
    }

    #[test]
    fn ou_closed_form_monotone_direction() {
        let p = isotropic_quadratic(1.0, 2).unwrap();
        let (h, s2) = (0.1, 1.0);
        let floor = h * 2.0 * s2 / 4.0;
        let high = Vector::from_vec(vec![1.0, 1.0]);
        let low = Vector::from_vec(vec![0.01, 0.0]);
        assert!(p.gap(&high).unwrap() > floor && p.gap(&low).unwrap() < floor);
        let mut prev_hi = f64::INFINITY;
        let mut prev_lo = f64::NEG_INFINITY;
        for i in 0..50 {
            let t = i as f64 * 0.1;
            let hi = expected_value_ou(&p, &high, h, s2, t).unwrap();
            let lo = expected_value_ou(&p, &low, h, s2, t).unwrap();
            assert!(hi < prev_hi || i == 0);
            assert!(lo > prev_lo || i == 0);
            prev_hi = hi;
            prev_lo = lo;
        }
    }

    #[test]
    fn pl_isotropic_has_zero_slack() {
        let p = isotropic_quadratic(1.5, 3).unwrap();
        let mut rng = path_rng(1, 0);
        let rep = verify_class(&p, FunctionClass::Pl, 200, 2.0, &mut rng).unwrap();
        assert!(rep.passed);
        assert!(rep.worst_slack.abs() < 1e-12);
    }

    #[test]
    fn convex_quadratic_is_wqc_with_tau_one() {
        let p = make_perturbed_quadratic(&[0.5, 3.0], Vector::zeros(2), vec![Vector::zeros(2)]).unwrap();
        let mut rng = path_rng(2, 0);
        assert!(verify_class(&p, FunctionClass::Wqc, 500, 3.0, &mut rng).unwrap().passed);
        assert!(verify_class(&p, FunctionClass::Rsi, 500, 3.0, &mut rng).unwrap().passed);
    }

    #[test]
    fn saddle_fails_claimed_pl_along_negative_direction() {
        let p = make_perturbed_quadratic(&[1.0, 2.0, -0.5], Vector::zeros(3), vec![Vector::zeros(3)])
            .unwrap()
            .with_constants(ProblemConstants { l: 2.0, mu_pl: Some(0.5), ..Default::default() })
            .unwrap();
        let along = Vector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(class_slack(&p, FunctionClass::Pl, &along).unwrap() < 0.0);
        let mut rng = path_rng(3, 0);
        assert!(!verify_class(&p, FunctionClass::Pl, 200, 1.0, &mut rng).unwrap().passed);
    }

    #[test]
    fn missing_constant_is_a_precondition_error() {
        let p = make_perturbed_quadratic(&[1.0, -1.0], Vector::zeros(2), vec![Vector::zeros(2)]).unwrap();
        let mut rng = path_rng(4, 0);
        assert!(matches!(
            verify_class(&p, FunctionClass::Pl, 10, 1.0, &mut rng),
            Err(Error::MissingConstant("mu_pl"))
        ));
    }

    #[test]
    fn rsi_mixture_constants() {
        let p = rsi_mixture(&[6.0, 6.0], 1.0).unwrap();
        let c = p.constants();
        assert_eq!(p.n_components(), 4);
        assert!((c.l - 7.0).abs() < 1e-12);
        assert!((c.l_variance() - 1.0).abs() < 1e-12);
        assert!((c.mu_rsi.unwrap() - 12.0).abs() < 1e-12);
        let mut rng = path_rng(5, 0);
        assert!(p.max_lipschitz_ratio(50, 2.0, &mut rng) <= 1.0 + 1e-9);
    }

    #[test]
    fn structured_fast_path_matches_components() {
        let mut rng = crate::rng::path_rng(9, 0);
        let problems = [
            make_perturbed_quadratic(&[1.0, 3.0, -0.5], Vector::from_column_slice(&[1.0, 0.0, -1.0]), vec![
                Vector::from_column_slice(&[0.3, -0.1, 0.2]),
                Vector::from_column_slice(&[-0.3, 0.1, -0.2]),
            ])
            .unwrap(),
            rsi_mixture(&[2.0, 3.0], 0.7).unwrap(),
            isotropic_with_noise(2.0, 5, 0.1).unwrap(),
        ];
        for p in &problems {
            for _ in 0..10 {
                let x = sample_ball(p.x_star(), 3.0, &mut rng);
                let fast = p.full_gradient(&x).unwrap();
                assert!((fast - p.component_mean_gradient(&x)).amax() < 1e-12);
                let fv = p.value(&x).unwrap();
                assert!((fv - p.component_mean_value(&x)).abs() < 1e-12 * (1.0 + fv.abs()));
            }
        }
    }
}
