//! Rate bounds for the diffusion models and the discrete algorithms,
//! their asymptotic exponents, ball-of-convergence limits, the Lyapunov
//! energies behind them, and the landscape-stretching closed forms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::problems::{FiniteSumProblem, ProblemConstants};
use crate::quadrature::integrate;
use crate::schedules::{Adjustment, AdjustmentSchedule, BatchSchedule};
use crate::Vector;

const QUAD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RateKind {
    /// Randomized-time gradient norm of the flow under smoothness.
    SmoothCt,
    /// Randomized-time suboptimality of the flow under weak quasi-convexity.
    WqcW1,
    /// Last-time suboptimality of the flow under weak quasi-convexity.
    WqcW2,
    PlCt,
    /// Epoch-start distance of the variance-reduced flow under RSI.
    VrCt,
    SmoothDt,
    WqcDtRand,
    WqcDtLast,
    PlDt,
    VrDt,
}

impl RateKind {
    pub const ALL: [RateKind; 10] = [
        RateKind::SmoothCt,
        RateKind::WqcW1,
        RateKind::WqcW2,
        RateKind::PlCt,
        RateKind::VrCt,
        RateKind::SmoothDt,
        RateKind::WqcDtRand,
        RateKind::WqcDtLast,
        RateKind::PlDt,
        RateKind::VrDt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateKind::SmoothCt => "SMOOTH_CT",
            RateKind::WqcW1 => "WQC_W1",
            RateKind::WqcW2 => "WQC_W2",
            RateKind::PlCt => "PL_CT",
            RateKind::VrCt => "VR_CT",
            RateKind::SmoothDt => "SMOOTH_DT",
            RateKind::WqcDtRand => "WQC_DT_RAND",
            RateKind::WqcDtLast => "WQC_DT_LAST",
            RateKind::PlDt => "PL_DT",
            RateKind::VrDt => "VR_DT",
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, RateKind::SmoothDt | RateKind::WqcDtRand | RateKind::WqcDtLast | RateKind::PlDt | RateKind::VrDt)
    }

    pub fn is_variance_reduced(self) -> bool {
        matches!(self, RateKind::VrCt | RateKind::VrDt)
    }

    /// Bounds on a quantity at a time drawn with density `psi / phi`.
    pub fn is_randomized(self) -> bool {
        matches!(self, RateKind::SmoothCt | RateKind::WqcW1 | RateKind::SmoothDt | RateKind::WqcDtRand)
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        RateKind::ALL.into_iter().find(|k| k.name() == upper).ok_or_else(|| {
            let names: Vec<&str> = RateKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown bound kind '{s}'; valid kinds: {}", names.join(", ")))
        })
    }
}

/// Everything a bound depends on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub constants: ProblemConstants,
    pub dim: usize,
    pub adj: AdjustmentSchedule,
    pub batch: BatchSchedule,
    /// `f(x0) - f*`.
    pub f0_gap: f64,
    /// `||x0 - x*||^2`.
    pub dist0_sq: f64,
    /// Epoch length `m` for the variance-reduced bounds.
    pub epoch_steps: Option<usize>,
}

impl BoundInputs {
    pub fn from_problem(
        problem: &FiniteSumProblem,
        adj: AdjustmentSchedule,
        batch: BatchSchedule,
        x0: &Vector,
    ) -> Result<Self> {
        Ok(BoundInputs {
            constants: problem.constants().clone(),
            dim: problem.dim(),
            adj,
            batch,
            f0_gap: problem.gap(x0)?,
            dist0_sq: (x0 - problem.x_star()).norm_squared(),
            epoch_steps: None,
        })
    }

    pub fn with_epoch_steps(mut self, m: usize) -> Self {
        self.epoch_steps = Some(m);
        self
    }

    fn h(&self) -> f64 {
        self.adj.h()
    }

    fn l(&self) -> f64 {
        self.constants.l
    }

    /// `h d L sigma*^2`, the common noise prefactor.
    fn noise_scale(&self) -> Result<f64> {
        Ok(self.h() * self.dim as f64 * self.l() * self.constants.sigma_star_sq()?)
    }

    fn epoch_steps(&self) -> Result<usize> {
        match self.epoch_steps {
            Some(m) if m >= 1 => Ok(m),
            _ => Err(Error::MissingConstant("epoch_steps")),
        }
    }
}

fn inadmissible(bound: &'static str, condition: String, h: f64) -> Error {
    Error::Inadmissible { bound, condition, h }
}

/// Checks the stepsize condition of a bound and the constants it needs.
pub fn check_admissible(inputs: &BoundInputs, kind: RateKind) -> Result<()> {
    inputs.constants.validate()?;
    inputs.batch.validate()?;
    let h = inputs.h();
    let l = inputs.l();
    match kind {
        RateKind::SmoothCt | RateKind::WqcW1 | RateKind::WqcW2 | RateKind::PlCt => {}
        RateKind::SmoothDt | RateKind::PlDt => {
            if h > 1.0 / l {
                return Err(inadmissible(kind.name(), format!("h <= 1/L = {}", 1.0 / l), h));
            }
        }
        RateKind::WqcDtRand => {
            let tau = inputs.constants.tau_wqc()?;
            if h > tau / (2.0 * l) {
                return Err(inadmissible(kind.name(), format!("0 < h <= tau/(2L) = {}", tau / (2.0 * l)), h));
            }
        }
        RateKind::WqcDtLast => {
            let tau = inputs.constants.tau_wqc()?;
            let cap = (2.0 * tau - 1.0) / (tau * l);
            if h > cap {
                return Err(inadmissible(kind.name(), format!("0 <= h <= 2/L - 1/(tau L) = {cap}"), h));
            }
        }
        RateKind::VrCt | RateKind::VrDt => {
            let mu = inputs.constants.mu_rsi()?;
            let lv = inputs.constants.l_variance();
            if !inputs.adj.is_constant() || inputs.batch.constant_value() != Some(1.0) {
                return Err(precondition("variance-reduced bounds need psi = 1 and b = 1"));
            }
            if mu - 2.0 * h * lv * lv <= 0.0 {
                return Err(inadmissible(kind.name(), format!("mu - 2 h L^2 > 0 (mu = {mu}, L = {lv})"), h));
            }
            inputs.epoch_steps()?;
        }
    }
    match kind {
        RateKind::PlCt | RateKind::PlDt => {
            inputs.constants.mu_pl()?;
        }
        RateKind::WqcW1 | RateKind::WqcW2 => {
            inputs.constants.tau_wqc()?;
        }
        _ => {}
    }
    if !kind.is_variance_reduced() {
        inputs.constants.sigma_star_sq()?;
    }
    Ok(())
}

/// `int_0^t (1+s)^p ds`.
fn power_integral(p: f64, t: f64) -> f64 {
    if (p + 1.0).abs() < 1e-14 {
        t.ln_1p()
    } else {
        ((p + 1.0) * t.ln_1p()).exp_m1() / (p + 1.0)
    }
}

fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    integrate(f, a, b, QUAD_REL_TOL, 1e-300, 8).value
}

/// `int_0^t psi(s)^2 / b(s) ds`.
pub fn noise_integral(adj: &AdjustmentSchedule, batch: &BatchSchedule, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match (adj.family(), *batch) {
        (Adjustment::Constant, BatchSchedule::Constant { b }) => t / b as f64,
        (Adjustment::Power { a }, BatchSchedule::Constant { b }) => power_integral(-2.0 * a, t) / b as f64,
        (Adjustment::Constant, BatchSchedule::Linear { b0, rate }) if rate > 0.0 => (rate * t / b0).ln_1p() / rate,
        _ => noise_integral_quadrature(adj, batch, t),
    }
}

pub fn noise_integral_quadrature(adj: &AdjustmentSchedule, batch: &BatchSchedule, t: f64) -> f64 {
    quad(|s| adj.psi(s).powi(2) / batch.b(s), 0.0, t)
}

/// `int_0^t (L tau phi(s) + 1) psi(s)^2 / b(s) ds`.
pub fn weighted_noise_integral(adj: &AdjustmentSchedule, batch: &BatchSchedule, l_tau: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match (adj.family(), *batch) {
        (Adjustment::Constant, BatchSchedule::Constant { b }) => (l_tau * t * t / 2.0 + t) / b as f64,
        (Adjustment::Power { a }, BatchSchedule::Constant { b }) => {
            let phi_psi2 = if a == 1.0 {
                1.0 - (t.ln_1p() + 1.0) / (1.0 + t)
            } else {
                (power_integral(1.0 - 3.0 * a, t) - power_integral(-2.0 * a, t)) / (1.0 - a)
            };
            (l_tau * phi_psi2 + power_integral(-2.0 * a, t)) / b as f64
        }
        _ => weighted_noise_integral_quadrature(adj, batch, l_tau, t),
    }
}

pub fn weighted_noise_integral_quadrature(adj: &AdjustmentSchedule, batch: &BatchSchedule, l_tau: f64, t: f64) -> f64 {
    quad(|s| (l_tau * adj.phi_unchecked(s) + 1.0) * adj.psi(s).powi(2) / batch.b(s), 0.0, t)
}

/// `int_0^t psi(s)^2 / b(s) exp(-2 mu (phi(t) - phi(s))) ds`.
pub fn pl_kernel_integral(adj: &AdjustmentSchedule, batch: &BatchSchedule, mu: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match (adj.family(), *batch) {
        (Adjustment::Constant, BatchSchedule::Constant { b }) => -(-2.0 * mu * t).exp_m1() / (2.0 * mu * b as f64),
        _ => pl_kernel_integral_quadrature(adj, batch, mu, t),
    }
}

pub fn pl_kernel_integral_quadrature(adj: &AdjustmentSchedule, batch: &BatchSchedule, mu: f64, t: f64) -> f64 {
    // The exponent is kept nonpositive, so nothing overflows; the mass sits
    // in a layer of width ~ 1/(2 mu psi(t)) below t, integrated separately.
    let phi_t = adj.phi_unchecked(t);
    let kernel = |s: f64| adj.psi(s).powi(2) / batch.b(s) * (-2.0 * mu * (phi_t - adj.phi_unchecked(s))).exp();
    let layer = (40.0 / (2.0 * mu * adj.psi(t))).min(t);
    let split = t - layer;
    let mut total = quad(kernel, split, t);
    if split > 0.0 {
        total += quad(kernel, 0.0, split);
    }
    total
}

fn require_positive_time(kind: RateKind, t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(precondition(format!("{kind} needs t > 0, got {t}")));
    }
    Ok(())
}

/// Gradient-norm bound at a randomized time for the flow:
/// `(f0 - f*)/phi(t) + h d L sigma*^2 / (2 phi(t)) int psi^2/b`.
pub fn bound_smooth_ct(inputs: &BoundInputs, t: f64) -> Result<f64> {
    check_admissible(inputs, RateKind::SmoothCt)?;
    require_positive_time(RateKind::SmoothCt, t)?;
    let phi = inputs.adj.phi(t)?;
    Ok(inputs.f0_gap / phi + inputs.noise_scale()? / (2.0 * phi) * noise_integral(&inputs.adj, &inputs.batch, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WqcVariant {
    Randomized,
    LastIterate,
}

/// Weak quasi-convex bounds for the flow.
pub fn bound_wqc(inputs: &BoundInputs, t: f64, variant: WqcVariant) -> Result<f64> {
    let kind = match variant {
        WqcVariant::Randomized => RateKind::WqcW1,
        WqcVariant::LastIterate => RateKind::WqcW2,
    };
    check_admissible(inputs, kind)?;
    require_positive_time(kind, t)?;
    let tau = inputs.constants.tau_wqc()?;
    let phi = inputs.adj.phi(t)?;
    let noise = inputs.h() * inputs.dim as f64 * inputs.constants.sigma_star_sq()?;
    let integral = match variant {
        WqcVariant::Randomized => noise_integral(&inputs.adj, &inputs.batch, t),
        WqcVariant::LastIterate => weighted_noise_integral(&inputs.adj, &inputs.batch, inputs.l() * tau, t),
    };
    Ok(inputs.dist0_sq / (2.0 * tau * phi) + noise / (2.0 * tau * phi) * integral)
}

/// PL bound for the flow:
/// `e^{-2 mu phi(t)} (f0 - f*) + (h d L sigma*^2 / 2) int psi^2/b e^{-2 mu (phi(t) - phi(s))}`.
pub fn bound_pl_ct(inputs: &BoundInputs, t: f64) -> Result<f64> {
    check_admissible(inputs, RateKind::PlCt)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(precondition(format!("PL_CT needs t >= 0, got {t}")));
    }
    let mu = inputs.constants.mu_pl()?;
    let phi = inputs.adj.phi(t)?;
    Ok((-2.0 * mu * phi).exp() * inputs.f0_gap
        + inputs.noise_scale()? / 2.0 * pl_kernel_integral(&inputs.adj, &inputs.batch, mu, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VrMode {
    Continuous,
    Discrete,
}

/// Per-epoch contraction factor of the variance-reduced bounds.
pub fn vr_contraction(inputs: &BoundInputs, mode: VrMode) -> Result<f64> {
    let kind = match mode {
        VrMode::Continuous => RateKind::VrCt,
        VrMode::Discrete => RateKind::VrDt,
    };
    check_admissible(inputs, kind)?;
    let mu = inputs.constants.mu_rsi()?;
    let lv2 = inputs.constants.l_variance().powi(2);
    let h = inputs.h();
    let m = inputs.epoch_steps()? as f64;
    Ok(match mode {
        VrMode::Continuous => {
            let period = m * h;
            (2.0 * h * lv2 * period + 1.0) / (period * (mu - 2.0 * h * lv2))
        }
        VrMode::Discrete => (1.0 + 2.0 * lv2 * h * h * m) / (h * m * (mu - 2.0 * lv2 * h)),
    })
}

/// `rho^j ||x0 - x*||^2`.
pub fn bound_vr(inputs: &BoundInputs, j: usize, mode: VrMode) -> Result<f64> {
    let rho = vr_contraction(inputs, mode)?;
    Ok(rho.powi(j.min(i32::MAX as usize) as i32) * inputs.dist0_sq)
}

/// Values of a discrete bound for `k = 0..=k_max`; entry `k` bounds the
/// iterate `x_{k+1}` (last-iterate kinds) or the randomized pick from
/// `x_0..x_k` (randomized kinds).
pub fn bound_discrete_series(inputs: &BoundInputs, kind: RateKind, k_max: usize) -> Result<Vec<f64>> {
    if !kind.is_discrete() || kind.is_variance_reduced() {
        return Err(precondition(format!("{kind} is not a mini-batch discrete bound")));
    }
    check_admissible(inputs, kind)?;
    let h = inputs.h();
    let d = inputs.dim as f64;
    let l = inputs.l();
    let sigma2 = inputs.constants.sigma_star_sq()?;
    let mut out = Vec::with_capacity(k_max + 1);
    // phi_{k+1} = sum_{i<=k} psi_i; `sum` accumulates the kind's noise sum.
    let mut phi_next = 0.0;
    let mut sum = 0.0;
    let mut prod = 1.0;
    for k in 0..=k_max {
        let psi = inputs.adj.psi_k(k);
        let w = psi * psi / inputs.batch.b_k(k, h) as f64;
        phi_next += psi;
        let h_phi = h * phi_next;
        let value = match kind {
            RateKind::SmoothDt => {
                sum += w * h;
                2.0 * inputs.f0_gap / h_phi + h * d * l * sigma2 / h_phi * sum
            }
            RateKind::WqcDtRand => {
                let tau = inputs.constants.tau_wqc()?;
                sum += w * h;
                inputs.dist0_sq / (tau * h_phi) + d * h * sigma2 / (tau * h_phi) * sum
            }
            RateKind::WqcDtLast => {
                let tau = inputs.constants.tau_wqc()?;
                sum += (1.0 + tau * l * h_phi) * w * h;
                inputs.dist0_sq / (2.0 * tau * h_phi) + h * d * sigma2 / (2.0 * tau * h_phi) * sum
            }
            RateKind::PlDt => {
                let mu = inputs.constants.mu_pl()?;
                let c = 1.0 - mu * h * psi;
                prod *= c;
                sum = c * sum + w * h;
                prod * inputs.f0_gap + h * d * l * sigma2 / 2.0 * sum
            }
            _ => unreachable!(),
        };
        out.push(value);
    }
    Ok(out)
}

pub fn bound_discrete(inputs: &BoundInputs, k: usize, kind: RateKind) -> Result<f64> {
    Ok(*bound_discrete_series(inputs, kind, k)?.last().expect("nonempty series"))
}

/// Limit of a bound under `psi = 1` and constant `b`.
pub fn ball_limit(inputs: &BoundInputs, kind: RateKind) -> Result<f64> {
    check_admissible(inputs, kind)?;
    let b = match (inputs.adj.is_constant(), inputs.batch.constant_value()) {
        (true, Some(b)) => b,
        _ => return Err(precondition("ball limits need psi = 1 and a constant batch size")),
    };
    let h = inputs.h();
    let d = inputs.dim as f64;
    let l = inputs.l();
    let sigma2 = inputs.constants.sigma_star_sq();
    Ok(match kind {
        RateKind::SmoothCt => h * d * l * sigma2? / (2.0 * b),
        RateKind::WqcW1 => h * d * sigma2? / (2.0 * inputs.constants.tau_wqc()? * b),
        RateKind::PlCt => h * d * l * sigma2? / (4.0 * inputs.constants.mu_pl()? * b),
        RateKind::SmoothDt => h * d * l * sigma2? / b,
        RateKind::WqcDtRand => h * d * sigma2? / (inputs.constants.tau_wqc()? * b),
        RateKind::PlDt => h * d * l * sigma2? / (2.0 * inputs.constants.mu_pl()? * b),
        RateKind::VrCt | RateKind::VrDt => 0.0,
        RateKind::WqcW2 | RateKind::WqcDtLast => {
            return Err(precondition(format!("{kind} grows without bound under psi = 1")))
        }
    })
}

/// A bound bundled with its inputs, evaluable on its natural axis: time
/// `t` for the flow kinds, step `k` for the discrete kinds and epoch `j`
/// for the variance-reduced kinds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBound {
    pub kind: RateKind,
    pub inputs: BoundInputs,
}

impl RateBound {
    pub fn new(kind: RateKind, inputs: BoundInputs) -> Result<Self> {
        check_admissible(&inputs, kind)?;
        Ok(RateBound { kind, inputs })
    }

    pub fn value(&self, at: f64) -> Result<f64> {
        let index = || -> Result<usize> {
            if at >= 0.0 && at.fract() == 0.0 && at.is_finite() {
                Ok(at as usize)
            } else {
                Err(precondition(format!("{} is evaluated at integer indices, got {at}", self.kind)))
            }
        };
        match self.kind {
            RateKind::SmoothCt => bound_smooth_ct(&self.inputs, at),
            RateKind::WqcW1 => bound_wqc(&self.inputs, at, WqcVariant::Randomized),
            RateKind::WqcW2 => bound_wqc(&self.inputs, at, WqcVariant::LastIterate),
            RateKind::PlCt => bound_pl_ct(&self.inputs, at),
            RateKind::VrCt => bound_vr(&self.inputs, index()?, VrMode::Continuous),
            RateKind::VrDt => bound_vr(&self.inputs, index()?, VrMode::Discrete),
            kind => bound_discrete(&self.inputs, index()?, kind),
        }
    }

    /// Values at many points; discrete kinds share one pass over the sums.
    pub fn values(&self, at: &[f64]) -> Result<Vec<f64>> {
        if self.kind.is_discrete() && !self.kind.is_variance_reduced() {
            let max = at.iter().cloned().fold(0.0, f64::max);
            if at.iter().any(|a| !(*a >= 0.0 && a.fract() == 0.0)) {
                return Err(precondition(format!("{} is evaluated at integer indices", self.kind)));
            }
            let series = bound_discrete_series(&self.inputs, self.kind, max as usize)?;
            return Ok(at.iter().map(|a| series[*a as usize]).collect());
        }
        at.iter().map(|a| self.value(*a)).collect()
    }
}

/// Function classes of the asymptotic-rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AsymptoticClass {
    Pl,
    WqcLast,
    WqcRand,
    SmoothRand,
}

/// Asymptotic decay of a bound under `psi(t) = (1+t)^{-a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RateDescriptor {
    /// `t^{-beta}`.
    Power { beta: f64 },
    /// `log(t) / t^{beta}`.
    LogOverPower { beta: f64 },
    /// `1 / log(t)`.
    InverseLog,
    /// No convergence guarantee.
    None,
}

impl RateDescriptor {
    /// Leading power-law exponent, ignoring logarithmic factors.
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            RateDescriptor::Power { beta } | RateDescriptor::LogOverPower { beta } => Some(beta),
            RateDescriptor::InverseLog => Some(0.0),
            RateDescriptor::None => None,
        }
    }
}

pub fn asymptotic_exponent(a: f64, class: AsymptoticClass) -> Result<RateDescriptor> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(precondition(format!("decay power a must lie in (0, 1], got {a}")));
    }
    const EPS: f64 = 1e-12;
    let near = |x: f64| (a - x).abs() < EPS;
    Ok(match class {
        AsymptoticClass::Pl => RateDescriptor::Power { beta: a },
        AsymptoticClass::WqcLast => {
            if a <= 0.5 + EPS {
                RateDescriptor::None
            } else if near(2.0 / 3.0) {
                RateDescriptor::LogOverPower { beta: 1.0 / 3.0 }
            } else if near(1.0) {
                RateDescriptor::InverseLog
            } else if a < 2.0 / 3.0 {
                RateDescriptor::Power { beta: 2.0 * a - 1.0 }
            } else {
                RateDescriptor::Power { beta: 1.0 - a }
            }
        }
        AsymptoticClass::WqcRand | AsymptoticClass::SmoothRand => {
            if near(0.5) {
                RateDescriptor::LogOverPower { beta: 0.5 }
            } else if near(1.0) {
                RateDescriptor::InverseLog
            } else if a < 0.5 {
                RateDescriptor::Power { beta: a }
            } else {
                RateDescriptor::Power { beta: 1.0 - a }
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnergyKind {
    Smooth,
    Wqc1,
    Wqc2,
    Pl,
    Rsi,
}

/// Lyapunov energy `E(x, t)` of the flow analysis.
pub fn lyapunov_energy(
    kind: EnergyKind,
    problem: &FiniteSumProblem,
    adj: &AdjustmentSchedule,
    x: &Vector,
    t: f64,
) -> Result<f64> {
    let gap = problem.gap(x)?;
    let half_dist = 0.5 * (x - problem.x_star()).norm_squared();
    Ok(match kind {
        EnergyKind::Smooth => gap,
        EnergyKind::Wqc1 | EnergyKind::Rsi => half_dist,
        EnergyKind::Wqc2 => problem.constants().tau_wqc()? * adj.phi(t)? * gap + half_dist,
        EnergyKind::Pl => (2.0 * problem.constants().mu_pl()? * adj.phi(t)?).exp() * gap,
    })
}

fn check_stretch(lambda: f64, u0: f64) -> Result<()> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(precondition(format!("lambda must be nonzero, got {lambda}")));
    }
    if u0 == 0.0 || !u0.is_finite() {
        return Err(precondition(format!("u0 must be nonzero, got {u0}")));
    }
    Ok(())
}

/// `(1 + t)^{-lambda} u0`, the mean coordinate under `psi = 1/(1+t)`.
pub fn landscape_stretch_reference(lambda: f64, u0: f64, t: f64) -> Result<f64> {
    if !lambda.is_finite() || !(t >= 0.0) {
        return Err(precondition(format!("need finite lambda and t >= 0, got lambda={lambda}, t={t}")));
    }
    Ok((-lambda * t.ln_1p()).exp() * u0)
}

/// `-lambda u0^{-1/lambda} u^{1 + 1/lambda}`, the autonomous right-hand side
/// obtained by eliminating time from the reference solution.
pub fn equivalent_gradient_rhs(lambda: f64, u0: f64, u: f64) -> Result<f64> {
    check_stretch(lambda, u0)?;
    let ratio = u / u0;
    if ratio < 0.0 {
        return Err(precondition(format!("u = {u} and u0 = {u0} must share a sign")));
    }
    Ok(-lambda * u * ratio.powf(1.0 / lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constants() -> ProblemConstants {
        ProblemConstants {
            l: 2.0,
            mu_pl: Some(1.0),
            mu_rsi: Some(2.0),
            tau_wqc: Some(1.0),
            sigma_star_sq: Some(0.5),
            l_variance: None,
            f_star: 0.0,
        }
    }

    fn inputs(adj: AdjustmentSchedule, b: usize) -> BoundInputs {
        BoundInputs {
            constants: constants(),
            dim: 2,
            adj,
            batch: BatchSchedule::constant(b).unwrap(),
            f0_gap: 3.0,
            dist0_sq: 4.0,
            epoch_steps: Some(10),
        }
    }

    #[test]
    fn smooth_ct_constant_psi() {
        let inp = inputs(AdjustmentSchedule::constant(0.1).unwrap(), 1);
        let t = 7.0;
        let expected = (3.0 + 0.1 * 2.0 * 2.0 * 0.5 * t / 2.0) / t;
        assert_relative_eq!(bound_smooth_ct(&inp, t).unwrap(), expected, max_relative = 1e-14);
        assert!(bound_smooth_ct(&inp, 0.0).is_err());
    }

    #[test]
    fn noise_free_wqc_variants_agree() {
        let mut inp = inputs(AdjustmentSchedule::power(0.1, 0.7).unwrap(), 1);
        inp.constants.sigma_star_sq = Some(0.0);
        for t in [0.5, 3.0, 40.0] {
            let phi = inp.adj.phi(t).unwrap();
            let w1 = bound_wqc(&inp, t, WqcVariant::Randomized).unwrap();
            let w2 = bound_wqc(&inp, t, WqcVariant::LastIterate).unwrap();
            assert_relative_eq!(w1, 4.0 / (2.0 * phi), max_relative = 1e-14);
            assert_relative_eq!(w2, w1, max_relative = 1e-14);
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for (adj, b) in [
            (AdjustmentSchedule::constant(0.1).unwrap(), 1),
            (AdjustmentSchedule::power(0.1, 0.3).unwrap(), 2),
            (AdjustmentSchedule::power(0.1, 0.5).unwrap(), 1),
            (AdjustmentSchedule::power(0.1, 2.0 / 3.0).unwrap(), 3),
            (AdjustmentSchedule::power(0.1, 1.0).unwrap(), 1),
        ] {
            let batch = BatchSchedule::constant(b).unwrap();
            for t in [0.3, 5.0, 120.0] {
                let c = noise_integral(&adj, &batch, t);
                let q = noise_integral_quadrature(&adj, &batch, t);
                assert_relative_eq!(c, q, max_relative = 1e-8);
                let c = weighted_noise_integral(&adj, &batch, 1.7, t);
                let q = weighted_noise_integral_quadrature(&adj, &batch, 1.7, t);
                assert_relative_eq!(c, q, max_relative = 1e-8);
            }
        }
        let adj = AdjustmentSchedule::constant(0.1).unwrap();
        let batch = BatchSchedule::constant(2).unwrap();
        for t in [0.1, 2.0, 50.0, 500.0] {
            let c = pl_kernel_integral(&adj, &batch, 1.5, t);
            let q = pl_kernel_integral_quadrature(&adj, &batch, 1.5, t);
            assert_relative_eq!(c, q, max_relative = 1e-8);
        }
    }

    #[test]
    fn pl_ct_limits() {
        let inp = inputs(AdjustmentSchedule::constant(0.1).unwrap(), 2);
        assert_relative_eq!(bound_pl_ct(&inp, 0.0).unwrap(), 3.0);
        let limit = ball_limit(&inp, RateKind::PlCt).unwrap();
        assert_relative_eq!(limit, 0.1 * 2.0 * 2.0 * 0.5 / (4.0 * 1.0 * 2.0), max_relative = 1e-14);
        assert_relative_eq!(bound_pl_ct(&inp, 1e3).unwrap(), limit, max_relative = 1e-12);
        // Large mu phi(t): no overflow on the quadrature path either.
        let inp = inputs(AdjustmentSchedule::power(0.1, 0.3).unwrap(), 1);
        let v = bound_pl_ct(&inp, 1e5).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn pl_dt_geometric_without_noise() {
        let mut inp = inputs(AdjustmentSchedule::constant(0.25).unwrap(), 1);
        inp.constants.sigma_star_sq = Some(0.0);
        let s = bound_discrete_series(&inp, RateKind::PlDt, 20).unwrap();
        for (k, v) in s.iter().enumerate() {
            assert_relative_eq!(*v, 0.75f64.powi(k as i32 + 1) * 3.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn pl_dt_matches_table_sum_and_limit() {
        let inp = inputs(AdjustmentSchedule::power(0.2, 0.5).unwrap(), 1);
        let k = 30;
        let mu = 1.0;
        let h = 0.2;
        let eta = |i: usize| h * inp.adj.psi_k(i);
        let full: f64 = (0..=k).map(|i| 1.0 - mu * eta(i)).product();
        let mut sum = 0.0;
        for i in 0..=k {
            let head: f64 = (0..=i).map(|j| 1.0 - mu * eta(j)).product();
            sum += full / head * inp.adj.psi_k(i).powi(2) * h;
        }
        let expected = full * 3.0 + h * 2.0 * 2.0 * 0.5 / 2.0 * sum;
        assert_relative_eq!(bound_discrete(&inp, k, RateKind::PlDt).unwrap(), expected, max_relative = 1e-12);

        let inp = inputs(AdjustmentSchedule::constant(0.2).unwrap(), 2);
        let far = bound_discrete(&inp, 2000, RateKind::PlDt).unwrap();
        assert_relative_eq!(far, ball_limit(&inp, RateKind::PlDt).unwrap(), max_relative = 1e-10);
        assert_relative_eq!(
            ball_limit(&inp, RateKind::PlDt).unwrap() / ball_limit(&inp, RateKind::PlCt).unwrap(),
            2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn admissibility_errors() {
        let inp = inputs(AdjustmentSchedule::constant(0.6).unwrap(), 1);
        for kind in [RateKind::PlDt, RateKind::SmoothDt, RateKind::WqcDtRand] {
            match bound_discrete(&inp, 3, kind) {
                Err(Error::Inadmissible { bound, .. }) => assert_eq!(bound, kind.name()),
                other => panic!("{kind}: {other:?}"),
            }
        }
        // cap (2 tau - 1)/(tau L) = 0.5
        assert!(bound_discrete(&inp, 3, RateKind::WqcDtLast).is_err());
        let ok = inputs(AdjustmentSchedule::constant(0.5).unwrap(), 1);
        assert!(bound_discrete(&ok, 3, RateKind::WqcDtLast).is_ok());
    }

    #[test]
    fn vr_rho_example() {
        let c = ProblemConstants { l: 1.0, mu_pl: Some(1.0), mu_rsi: Some(10.0), ..Default::default() };
        let inp = BoundInputs {
            constants: c,
            dim: 2,
            adj: AdjustmentSchedule::constant(0.01).unwrap(),
            batch: BatchSchedule::constant(1).unwrap(),
            f0_gap: 1.0,
            dist0_sq: 2.0,
            epoch_steps: Some(100),
        };
        let rc = vr_contraction(&inp, VrMode::Continuous).unwrap();
        let rd = vr_contraction(&inp, VrMode::Discrete).unwrap();
        assert_relative_eq!(rc, 1.02 / 9.98, max_relative = 1e-14);
        assert!((rc - rd).abs() <= 1e-15);
        assert_eq!(bound_vr(&inp, 0, VrMode::Discrete).unwrap(), 2.0);
    }

    #[test]
    fn table_exponents() {
        assert_eq!(asymptotic_exponent(0.3, AsymptoticClass::Pl).unwrap(), RateDescriptor::Power { beta: 0.3 });
        match asymptotic_exponent(0.55, AsymptoticClass::WqcLast).unwrap() {
            RateDescriptor::Power { beta } => assert!((beta - 0.1).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            asymptotic_exponent(0.5, AsymptoticClass::SmoothRand).unwrap(),
            RateDescriptor::LogOverPower { beta: 0.5 }
        );
        assert_eq!(asymptotic_exponent(0.4, AsymptoticClass::WqcLast).unwrap(), RateDescriptor::None);
        assert_eq!(asymptotic_exponent(1.0, AsymptoticClass::WqcRand).unwrap(), RateDescriptor::InverseLog);
        assert!(asymptotic_exponent(0.0, AsymptoticClass::Pl).is_err());
    }

    #[test]
    fn stretching_identities() {
        assert_relative_eq!(landscape_stretch_reference(1.0, 1.0, 1.0).unwrap(), 0.5);
        for lambda in [1.0, 2.0, -0.5, 0.3] {
            for i in 0..100 {
                let t = 0.1 * i as f64;
                let u = landscape_stretch_reference(lambda, 1.5, t).unwrap();
                let du = -lambda * u / (1.0 + t);
                assert!((du - equivalent_gradient_rhs(lambda, 1.5, u).unwrap()).abs() <= 1e-9);
            }
        }
        assert!(equivalent_gradient_rhs(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in RateKind::ALL {
            assert_eq!(kind.name().parse::<RateKind>().unwrap(), kind);
            assert_eq!(serde_json::to_string(&kind).unwrap(), format!("\"{}\"", kind.name()));
        }
        assert!("nope".parse::<RateKind>().is_err());
    }
}
