//! Euler–Maruyama integration of the gradient-flow diffusions.
//!
//! Three models are provided on top of the generic integrator:
//! the mini-batch flow (an SDE), the variance-reduced flow (an SDDE whose
//! volatility looks back to the epoch start, optionally with Option II
//! jumps), and the time-changed process obtained by running the mini-batch
//! flow on the warped clock `phi`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, precondition, Result};
use crate::estimators::{sigma_mb, sigma_vr};
use crate::problems::FiniteSumProblem;
use crate::schedules::{AdjustmentSchedule, BatchSchedule, StalenessSchedule};
use crate::trajectory::{is_divergent, RecordOptions, Recorder, Trajectory, FLAG_JUMP};
use crate::{Matrix, Vector};

/// Volatility at one step, `sigma` in `dX = b dt + sigma dB`.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    Zero,
    /// `s I`.
    Scalar(f64),
    Matrix(Matrix),
}

impl Diffusion {
    fn scaled(self, c: f64) -> Diffusion {
        match self {
            Diffusion::Zero => Diffusion::Zero,
            Diffusion::Scalar(s) => Diffusion::Scalar(c * s),
            Diffusion::Matrix(m) => Diffusion::Matrix(m * c),
        }
    }
}

pub type DriftFn<'a> = dyn Fn(&Vector, f64) -> Result<Vector> + 'a;
/// `(state, time, delayed state) -> volatility`.
pub type VolatilityFn<'a> = dyn Fn(&Vector, f64, &Vector) -> Result<Diffusion> + 'a;

/// A stochastic (delay) differential equation and its integration grid.
pub struct SdeSpec<'a> {
    pub drift: Box<DriftFn<'a>>,
    pub volatility: Box<VolatilityFn<'a>>,
    pub x0: Vector,
    pub dt: f64,
    pub horizon: f64,
    /// Delay mode: epoch length in integrator steps. The delayed state seen
    /// by the volatility is the state at the start of the current epoch
    /// (pre-history `x0`).
    pub delay_steps: Option<usize>,
    /// With a delay, resample the state at each epoch end uniformly from
    /// the epoch's stored grid states.
    pub jumps: bool,
}

impl SdeSpec<'_> {
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(precondition(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(precondition(format!("horizon T = {} must be at least dt = {}", self.horizon, self.dt)));
        }
        let ratio = self.horizon / self.dt;
        let k = ratio.round();
        Ok(if (ratio - k).abs() <= 1e-9 * ratio { k } else { ratio.ceil() } as usize)
    }
}

/// Euler–Maruyama: `x_{k+1} = x_k + dt b(x_k, t_k) + sqrt(dt) sigma(x_k, t_k, x_delayed) Z_k`.
///
/// `observer` supplies the recorded observables.
pub fn euler_maruyama<R: Rng + ?Sized>(
    spec: &SdeSpec<'_>,
    observer: &FiniteSumProblem,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    check_dim(observer.dim(), spec.x0.len())?;
    let n = spec.n_steps()?;
    if spec.delay_steps == Some(0) {
        return Err(precondition("delay must span at least one step"));
    }
    if spec.jumps && spec.delay_steps.is_none() {
        return Err(precondition("jumps need an epoch length"));
    }
    let d = spec.x0.len();
    let dt = spec.dt;
    let sqrt_dt = dt.sqrt();
    let mut rec = Recorder::new(observer, record);
    let mut x = spec.x0.clone();
    let mut epoch_start = spec.x0.clone();
    let mut epoch_states: Vec<Vector> = Vec::with_capacity(spec.delay_steps.filter(|_| spec.jumps).unwrap_or(0));

    for k in 0..n {
        let t = k as f64 * dt;
        if let Some(q) = spec.delay_steps {
            if k > 0 && k % q == 0 {
                if spec.jumps {
                    let pick = rng.random_range(0..epoch_states.len());
                    x = epoch_states[pick].clone();
                    rec.flag(FLAG_JUMP);
                    epoch_states.clear();
                }
                epoch_start.copy_from(&x);
            }
            if spec.jumps {
                epoch_states.push(x.clone());
            }
        }
        rec.record(k, t, &x, false)?;

        let drift = (spec.drift)(&x, t)?;
        check_dim(d, drift.len())?;
        let vol = (spec.volatility)(&x, t, &epoch_start)?;
        x.axpy(dt, &drift, 1.0);
        match vol {
            Diffusion::Zero => {}
            Diffusion::Scalar(s) => {
                for xi in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *xi += sqrt_dt * s * z;
                }
            }
            Diffusion::Matrix(m) => {
                let z = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
                x.gemv(sqrt_dt, &m, &z, 1.0);
            }
        }
        if is_divergent(&x) {
            rec.diverge(k + 1, (k + 1) as f64 * dt, &x)?;
            return Ok(rec.finish());
        }
    }
    if let Some(q) = spec.delay_steps {
        if spec.jumps && n % q == 0 && !epoch_states.is_empty() {
            let pick = rng.random_range(0..epoch_states.len());
            x = epoch_states[pick].clone();
            rec.flag(FLAG_JUMP);
        }
    }
    rec.record(n, n as f64 * dt, &x, true)?;
    Ok(rec.finish())
}

/// How the volatility matrix of a flow is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolatilityMode {
    /// The exact `sigma_MB(x)` of the problem, recomputed every step.
    Exact,
    /// A fixed `sigma I`.
    Constant(f64),
}

fn mb_volatility(problem: &FiniteSumProblem, mode: VolatilityMode, x: &Vector) -> Result<Diffusion> {
    match mode {
        VolatilityMode::Constant(0.0) => Ok(Diffusion::Zero),
        VolatilityMode::Constant(s) => Ok(Diffusion::Scalar(s)),
        VolatilityMode::Exact => Ok(Diffusion::Matrix(sigma_mb(problem, x)?.sqrt_matrix)),
    }
}

fn check_mode(mode: VolatilityMode) -> Result<()> {
    match mode {
        VolatilityMode::Constant(s) if !(s >= 0.0 && s.is_finite()) => {
            Err(precondition(format!("constant volatility must be nonnegative, got {s}")))
        }
        _ => Ok(()),
    }
}

/// `dX = -psi(t) grad f(X) dt + psi(t) sqrt(h / b(t)) sigma(X) dB`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_mb_pgf<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    adj: &AdjustmentSchedule,
    batch: &BatchSchedule,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    mode: VolatilityMode,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    batch.validate()?;
    check_mode(mode)?;
    let h = adj.h();
    let spec = SdeSpec {
        drift: Box::new(|x: &Vector, t: f64| Ok(problem.full_gradient(x)? * (-adj.psi(t)))),
        volatility: Box::new(move |x: &Vector, t: f64, _: &Vector| {
            let c = adj.psi(t) * (h / batch.b(t)).sqrt();
            Ok(mb_volatility(problem, mode, x)?.scaled(c))
        }),
        x0: x0.clone(),
        dt,
        horizon,
        delay_steps: None,
        jumps: false,
    };
    euler_maruyama(&spec, problem, record, rng)
}

/// `dY = -grad f(Y) dt + sqrt(h psi(tau(t)) / b(tau(t))) sigma(Y) dB` with
/// `tau = phi^{-1}`; `Y(t)` has the law of `X(tau(t))`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_time_changed<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    adj: &AdjustmentSchedule,
    batch: &BatchSchedule,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    mode: VolatilityMode,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    batch.validate()?;
    check_mode(mode)?;
    // The warped clock must reach the whole horizon.
    adj.phi_inverse(horizon)?;
    let h = adj.h();
    let spec = SdeSpec {
        drift: Box::new(|x: &Vector, _: f64| Ok(-problem.full_gradient(x)?)),
        volatility: Box::new(move |x: &Vector, t: f64, _: &Vector| {
            let s = adj.phi_inverse_unchecked(t);
            let c = (h * adj.psi(s) / batch.b(s)).sqrt();
            Ok(mb_volatility(problem, mode, x)?.scaled(c))
        }),
        x0: x0.clone(),
        dt,
        horizon,
        delay_steps: None,
        jumps: false,
    };
    euler_maruyama(&spec, problem, record, rng)
}

/// Variance-reduced flow: `dX = -grad f(X) dt + sqrt(h) sigma_VR(X(t), X(t - xi(t))) dB`.
///
/// The epoch length `m h` must be a whole number of `dt` steps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_vr_pgf<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    staleness: &StalenessSchedule,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    with_jumps: bool,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(precondition(format!("dt must be positive, got {dt}")));
    }
    let h = staleness.h();
    let per_h = h / dt;
    if (per_h - per_h.round()).abs() > 1e-9 * per_h || per_h.round() < 1.0 {
        return Err(precondition(format!("dt = {dt} must divide h = {h}")));
    }
    let q = staleness.epoch_steps() * per_h.round() as usize;
    let spec = SdeSpec {
        drift: Box::new(|x: &Vector, _: f64| Ok(-problem.full_gradient(x)?)),
        volatility: Box::new(move |x: &Vector, _: f64, delayed: &Vector| {
            if x == delayed {
                return Ok(Diffusion::Zero);
            }
            Ok(Diffusion::Matrix(sigma_vr(problem, x, delayed)?.sqrt_matrix * h.sqrt()))
        }),
        x0: x0.clone(),
        dt,
        horizon,
        delay_steps: Some(q),
        jumps: with_jumps,
    };
    euler_maruyama(&spec, problem, record, rng)
}
