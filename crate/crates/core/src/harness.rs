//! Monte-Carlo ensembles over seeded path streams, bound verification and
//! the named experiments (time change, landscape stretching, weak error,
//! convergence balls, SVRG contraction, asymptotic exponents).
//!
//! Paths run in parallel; every reduction walks the paths in index order,
//! so results depend only on the master seed.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{asymptotic_exponent, lyapunov_energy, AsymptoticClass, EnergyKind, RateBound, RateKind};
use crate::continuous::{simulate_mb_pgf, simulate_time_changed, simulate_vr_pgf, VolatilityMode};
use crate::discrete::{run_mb_sgd, run_pgd, run_svrg_option2};
use crate::error::{check_dim, precondition, Error, Result};
use crate::estimators::sigma_mb_matrix;
use crate::linalg::sym_expm_neg_apply;
use crate::problems::{make_perturbed_quadratic, FiniteSumProblem};
use crate::rng::{path_rng, PathRng};
use crate::schedules::{AdjustmentSchedule, BatchSchedule, StalenessSchedule};
use crate::trajectory::{Observable, RecordOptions, Trajectory};
use crate::Vector;

/// Standard errors of slack for one- and two-sided checks.
pub const DEFAULT_SLACK_SE: f64 = 3.0;
/// Number of geometric checkpoints per verification.
pub const DEFAULT_CHECKPOINTS: usize = 30;

const CHUNK: usize = 64;

/// One simulation of any of the algorithms or models.
#[derive(Debug, Clone)]
pub enum RunSpec {
    Sgd { adj: AdjustmentSchedule, batch: BatchSchedule, x0: Vector, n_steps: usize },
    Pgd { adj: AdjustmentSchedule, batch: BatchSchedule, x0: Vector, n_steps: usize },
    Svrg { h: f64, epoch_steps: usize, n_epochs: usize, x0: Vector },
    MbPgf { adj: AdjustmentSchedule, batch: BatchSchedule, x0: Vector, dt: f64, horizon: f64, volatility: VolatilityMode },
    VrPgf { h: f64, epoch_steps: usize, x0: Vector, dt: f64, horizon: f64, with_jumps: bool },
    TimeChanged { adj: AdjustmentSchedule, batch: BatchSchedule, x0: Vector, dt: f64, horizon: f64, volatility: VolatilityMode },
}

impl RunSpec {
    pub fn simulate(&self, problem: &FiniteSumProblem, record: RecordOptions, rng: &mut PathRng) -> Result<Trajectory> {
        match self {
            RunSpec::Sgd { adj, batch, x0, n_steps } => run_mb_sgd(problem, adj, batch, x0, *n_steps, record, rng),
            RunSpec::Pgd { adj, batch, x0, n_steps } => run_pgd(problem, adj, batch, x0, *n_steps, record, rng),
            RunSpec::Svrg { h, epoch_steps, n_epochs, x0 } => {
                run_svrg_option2(problem, *h, *epoch_steps, *n_epochs, x0, record, rng)
            }
            RunSpec::MbPgf { adj, batch, x0, dt, horizon, volatility } => {
                simulate_mb_pgf(problem, adj, batch, x0, *dt, *horizon, *volatility, record, rng)
            }
            RunSpec::VrPgf { h, epoch_steps, x0, dt, horizon, with_jumps } => {
                let st = StalenessSchedule::new(*epoch_steps, *h)?;
                simulate_vr_pgf(problem, &st, x0, *dt, *horizon, *with_jumps, record, rng)
            }
            RunSpec::TimeChanged { adj, batch, x0, dt, horizon, volatility } => {
                simulate_time_changed(problem, adj, batch, x0, *dt, *horizon, *volatility, record, rng)
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, RunSpec::Sgd { .. } | RunSpec::Pgd { .. } | RunSpec::Svrg { .. })
    }

    pub fn x0(&self) -> &Vector {
        match self {
            RunSpec::Sgd { x0, .. }
            | RunSpec::Pgd { x0, .. }
            | RunSpec::Svrg { x0, .. }
            | RunSpec::MbPgf { x0, .. }
            | RunSpec::VrPgf { x0, .. }
            | RunSpec::TimeChanged { x0, .. } => x0,
        }
    }

    /// Adjustment in force along the path's own clock (the warped process
    /// runs at unit rate).
    pub fn adjustment(&self) -> Result<AdjustmentSchedule> {
        match self {
            RunSpec::Sgd { adj, .. } | RunSpec::Pgd { adj, .. } | RunSpec::MbPgf { adj, .. } => Ok(*adj),
            RunSpec::TimeChanged { adj, .. } => AdjustmentSchedule::constant(adj.h()),
            RunSpec::Svrg { h, .. } | RunSpec::VrPgf { h, .. } => AdjustmentSchedule::constant(*h),
        }
    }
}

/// Path-ordered Welford accumulator over fixed-length vectors.
#[derive(Debug, Clone)]
pub struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn add(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample length changed");
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance (zero for fewer than two samples).
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|s| (s / (self.n - 1) as f64).max(0.0)).collect()
    }

    pub fn standard_error(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Mean, variance and standard error along a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub se: Vec<f64>,
}

impl SeriesStats {
    fn from_slices(mean: &[f64], var: &[f64], n: usize) -> Self {
        let se = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        SeriesStats { mean: mean.to_vec(), var: var.to_vec(), se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableStats {
    pub f_gap: SeriesStats,
    pub grad_norm_sq: SeriesStats,
    pub dist_sq: SeriesStats,
}

impl ObservableStats {
    pub fn get(&self, which: Observable) -> &SeriesStats {
        match which {
            Observable::FGap => &self.f_gap,
            Observable::GradNormSq => &self.grad_norm_sq,
            Observable::DistSq => &self.dist_sq,
        }
    }
}

/// Per-coordinate state moments, indexed `[grid point][coordinate]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateStats {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub n_paths: usize,
    /// Paths entering the statistics (the non-divergent ones).
    pub n_used: usize,
    pub divergence_count: usize,
    pub observables: ObservableStats,
    /// Psi-weighted running averages `(1/phi(t)) int_0^t psi g`, the
    /// expectation at a randomized output time.
    pub randomized: ObservableStats,
    pub state: Option<StateStats>,
}

impl EnsembleStats {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn divergence_fraction(&self) -> f64 {
        self.divergence_count as f64 / self.n_paths as f64
    }
}

/// Runs `f` for every path index with its own stream; output in path order.
pub fn par_paths<T, F>(n_paths: usize, master_seed: u64, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize, &mut PathRng) -> Result<T> + Sync + Send,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Running psi-weighted averages of the three observables of a path.
fn randomized_series(traj: &Trajectory, adj: &AdjustmentSchedule, discrete: bool) -> [Vec<f64>; 3] {
    let n = traj.len();
    let mut out: [Vec<f64>; 3] = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let obs = |i: usize| {
        let o = &traj.observables[i];
        [o.f_gap, o.grad_norm_sq, o.dist_sq]
    };
    let mut acc = [0.0; 3];
    let mut weight = 0.0;
    for i in 0..n {
        if discrete {
            // Left Riemann sum over steps; exact when every step is recorded.
            let w = adj.psi_k(traj.steps[i]);
            let g = obs(i);
            let span = if i + 1 < n { (traj.steps[i + 1] - traj.steps[i]) as f64 } else { 1.0 };
            for c in 0..3 {
                out[c].push((acc[c] + w * g[c]) / (weight + w));
                acc[c] += w * g[c] * span;
            }
            weight += w * span;
        } else if i == 0 {
            let g = obs(0);
            for c in 0..3 {
                out[c].push(g[c]);
            }
        } else {
            let (t0, t1) = (traj.times[i - 1], traj.times[i]);
            let (w0, w1) = (adj.psi(t0), adj.psi(t1));
            let (g0, g1) = (obs(i - 1), obs(i));
            let dt = t1 - t0;
            weight += 0.5 * (w0 + w1) * dt;
            for c in 0..3 {
                acc[c] += 0.5 * (w0 * g0[c] + w1 * g1[c]) * dt;
                out[c].push(acc[c] / weight);
            }
        }
    }
    out
}

struct PathSummary {
    diverged: bool,
    times: Vec<f64>,
    steps: Vec<usize>,
    data: Vec<f64>,
}

fn summarize(traj: Trajectory, adj: &AdjustmentSchedule, discrete: bool) -> PathSummary {
    if traj.diverged {
        return PathSummary { diverged: true, times: Vec::new(), steps: Vec::new(), data: Vec::new() };
    }
    let n = traj.len();
    let d = traj.states.first().map_or(0, |s| s.len());
    let mut data = Vec::with_capacity(n * (6 + d));
    for o in &traj.observables {
        data.extend([o.f_gap, o.grad_norm_sq, o.dist_sq]);
    }
    let r = randomized_series(&traj, adj, discrete);
    for i in 0..n {
        data.extend([r[0][i], r[1][i], r[2][i]]);
    }
    for s in &traj.states {
        data.extend(s.iter());
    }
    PathSummary { diverged: false, times: traj.times, steps: traj.steps, data }
}

/// Aggregates `n_paths` independent trajectories of `run`.
///
/// Divergent paths are counted and left out of the moments; more than half
/// diverging is an error.
pub fn ensemble_run(
    problem: &FiniteSumProblem,
    run: &RunSpec,
    record: RecordOptions,
    n_paths: usize,
    master_seed: u64,
) -> Result<EnsembleStats> {
    if n_paths < 2 {
        return Err(precondition(format!("an ensemble needs at least 2 paths, got {n_paths}")));
    }
    check_dim(problem.dim(), run.x0().len())?;
    let adj = run.adjustment()?;
    let discrete = run.is_discrete();
    let mut grid: Option<(Vec<f64>, Vec<usize>)> = None;
    let mut moments: Option<Moments> = None;
    let mut diverged = 0;
    let mut start = 0;
    while start < n_paths {
        let end = (start + CHUNK).min(n_paths);
        let summaries: Vec<Result<PathSummary>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(master_seed, i as u64);
                Ok(summarize(run.simulate(problem, record, &mut rng)?, &adj, discrete))
            })
            .collect();
        for s in summaries {
            let s = s?;
            if s.diverged {
                diverged += 1;
                continue;
            }
            match &grid {
                None => {
                    moments = Some(Moments::new(s.data.len()));
                    grid = Some((s.times, s.steps));
                }
                Some((_, steps)) if *steps != s.steps => {
                    return Err(precondition("paths produced different time grids"));
                }
                _ => {}
            }
            moments.as_mut().expect("initialised with the grid").add(&s.data);
        }
        start = end;
    }
    if 2 * diverged > n_paths {
        return Err(Error::EnsembleDiverged { diverged, total: n_paths });
    }
    let (times, steps) = grid.expect("at least half the paths are finite");
    let moments = moments.expect("set together with the grid");
    let n_used = moments.count();
    let g = times.len();
    let mean = moments.mean();
    let var = moments.variance();
    let series = |offset: usize, c: usize| {
        let m: Vec<f64> = (0..g).map(|i| mean[offset + 3 * i + c]).collect();
        let v: Vec<f64> = (0..g).map(|i| var[offset + 3 * i + c]).collect();
        SeriesStats::from_slices(&m, &v, n_used)
    };
    let observables = ObservableStats { f_gap: series(0, 0), grad_norm_sq: series(0, 1), dist_sq: series(0, 2) };
    let randomized =
        ObservableStats { f_gap: series(3 * g, 0), grad_norm_sq: series(3 * g, 1), dist_sq: series(3 * g, 2) };
    let state = if record.keep_states {
        let d = problem.dim();
        let base = 6 * g;
        Some(StateStats {
            mean: (0..g).map(|i| mean[base + d * i..base + d * (i + 1)].to_vec()).collect(),
            var: (0..g).map(|i| var[base + d * i..base + d * (i + 1)].to_vec()).collect(),
        })
    } else {
        None
    };
    Ok(EnsembleStats { times, steps, n_paths, n_used, divergence_count: diverged, observables, randomized, state })
}

/// About `count` grid indices in `1..len`, geometrically spaced, always
/// including the last.
pub fn geometric_checkpoints(len: usize, count: usize) -> Vec<usize> {
    if len <= 1 {
        return Vec::new();
    }
    let last = len - 1;
    if last <= count {
        return (1..=last).collect();
    }
    let ratio = (last as f64).powf(1.0 / (count.max(2) - 1) as f64);
    let mut out: Vec<usize> = (0..count).map(|i| (ratio.powi(i as i32).round() as usize).clamp(1, last)).collect();
    out.push(last);
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// `empirical <= reference + tolerance`.
    OneSided,
    /// `|empirical - reference| <= tolerance`.
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub label: String,
    pub t: f64,
    pub empirical: f64,
    pub se: f64,
    pub reference: f64,
    pub tolerance: f64,
    /// Deviation in standard errors (signed for one-sided checks).
    pub violation_se: f64,
    pub pass: bool,
}

impl Checkpoint {
    pub fn new(label: impl Into<String>, t: f64, empirical: f64, se: f64, reference: f64, tolerance: f64, side: Sidedness) -> Self {
        let diff = match side {
            Sidedness::OneSided => empirical - reference,
            Sidedness::TwoSided => (empirical - reference).abs(),
        };
        // Round-off allowance so zero-noise comparisons are exact-ish.
        let fuzz = 1e-12 * reference.abs().max(empirical.abs());
        let pass = diff <= tolerance + fuzz;
        let violation_se = if se > 0.0 {
            diff / se
        } else if pass {
            // Deterministic comparison within its tolerance.
            0.0
        } else {
            f64::INFINITY
        };
        Checkpoint { label: label.into(), t, empirical, se, reference, tolerance, violation_se, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub experiment: String,
    pub pass: bool,
    /// Fraction of checkpoints that must pass.
    pub required_fraction: f64,
    pub pass_fraction: f64,
    pub max_violation_se: f64,
    pub slack_se: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub divergence_count: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Scalar diagnostics specific to the experiment.
    pub details: serde_json::Map<String, serde_json::Value>,
    pub config: serde_json::Value,
    pub runtime_secs: f64,
}

impl VerificationReport {
    fn assemble(experiment: &str, checkpoints: Vec<Checkpoint>, required_fraction: f64, slack_se: f64, seed: u64, n_paths: usize) -> Self {
        let passed = checkpoints.iter().filter(|c| c.pass).count();
        let pass_fraction = if checkpoints.is_empty() { 0.0 } else { passed as f64 / checkpoints.len() as f64 };
        let max_violation_se = checkpoints.iter().map(|c| c.violation_se).fold(f64::NEG_INFINITY, f64::max);
        VerificationReport {
            experiment: experiment.to_string(),
            pass: !checkpoints.is_empty() && pass_fraction >= required_fraction - 1e-12,
            required_fraction,
            pass_fraction,
            max_violation_se,
            slack_se,
            seed,
            n_paths,
            divergence_count: 0,
            checkpoints,
            details: serde_json::Map::new(),
            config: serde_json::Value::Null,
            runtime_secs: 0.0,
        }
    }

    /// Adds a scalar diagnostic.
    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    /// Folds an extra pass/fail condition into the verdict.
    pub fn require(&mut self, key: &str, ok: bool) {
        self.detail(key, ok);
        self.pass &= ok;
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Rows `(t, empirical, se, reference)`.
    pub fn curve_rows(&self) -> Vec<Vec<f64>> {
        self.checkpoints.iter().map(|c| vec![c.t, c.empirical, c.se, c.reference]).collect()
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        format!(
            "{}: {} ({}/{} checkpoints, max violation {:.2} SE)",
            self.experiment,
            if self.pass { "PASS" } else { "FAIL" },
            self.checkpoints.iter().filter(|c| c.pass).count(),
            self.checkpoints.len(),
            self.max_violation_se
        )
    }
}

/// Which ensemble series a bound constrains.
pub fn bound_observable(kind: RateKind) -> (Observable, bool) {
    match kind {
        RateKind::SmoothCt | RateKind::SmoothDt => (Observable::GradNormSq, true),
        RateKind::WqcW1 | RateKind::WqcDtRand => (Observable::FGap, true),
        RateKind::WqcW2 | RateKind::PlCt | RateKind::WqcDtLast | RateKind::PlDt => (Observable::FGap, false),
        RateKind::VrCt | RateKind::VrDt => (Observable::DistSq, false),
    }
}

/// One-sided check `mean <= bound + slack * SE` at the checkpoints.
///
/// Flow bounds are read at time `t`; last-iterate discrete bounds at step
/// `k` use the bound indexed `k - 1`; randomized discrete bounds use the
/// running average over steps `0..=k`; variance-reduced bounds are checked
/// at every epoch start.
pub fn verify_bound(stats: &EnsembleStats, bound: &RateBound, slack_se: f64, checkpoints: Option<&[usize]>) -> Result<VerificationReport> {
    let kind = bound.kind;
    let (obs, randomized) = bound_observable(kind);
    let series = if randomized { stats.randomized.get(obs) } else { stats.observables.get(obs) };
    let default;
    let idx: &[usize] = match checkpoints {
        Some(c) => c,
        None if kind.is_variance_reduced() => {
            let m = bound.inputs.epoch_steps.ok_or(Error::MissingConstant("epoch_steps"))?;
            let period = m as f64 * bound.inputs.adj.h();
            default = (0..stats.len())
                .filter(|&i| {
                    if kind == RateKind::VrDt {
                        stats.steps[i].is_multiple_of(m)
                    } else {
                        let j = stats.times[i] / period;
                        (j - j.round()).abs() < 1e-9 * j.max(1.0)
                    }
                })
                .collect::<Vec<_>>();
            &default
        }
        None => {
            default = geometric_checkpoints(stats.len(), DEFAULT_CHECKPOINTS);
            &default
        }
    };
    let mut points = Vec::with_capacity(idx.len());
    for &i in idx {
        if i >= stats.len() {
            return Err(precondition(format!("checkpoint {i} is outside the grid of {} points", stats.len())));
        }
        let (t, k) = (stats.times[i], stats.steps[i]);
        let at = match kind {
            RateKind::SmoothCt | RateKind::WqcW1 | RateKind::WqcW2 | RateKind::PlCt => t,
            RateKind::SmoothDt | RateKind::WqcDtRand => k as f64,
            RateKind::WqcDtLast | RateKind::PlDt => {
                if k == 0 {
                    continue;
                }
                (k - 1) as f64
            }
            RateKind::VrDt => (k / bound.inputs.epoch_steps.unwrap_or(1)) as f64,
            RateKind::VrCt => (t / (bound.inputs.epoch_steps.unwrap_or(1) as f64 * bound.inputs.adj.h())).round(),
        };
        if at == 0.0 && matches!(kind, RateKind::SmoothCt | RateKind::WqcW1 | RateKind::WqcW2) {
            continue;
        }
        let b = bound.value(at)?;
        let se = series.se[i];
        points.push(Checkpoint::new(format!("{kind}@{at}"), t, series.mean[i], se, b, slack_se * se, Sidedness::OneSided));
    }
    let mut report = VerificationReport::assemble(&format!("bound_{}", kind.name().to_lowercase()), points, 1.0, slack_se, 0, stats.n_paths);
    report.divergence_count = stats.divergence_count;
    report.detail("kind", kind);
    report.detail("divergence_fraction", stats.divergence_fraction());
    Ok(report)
}

fn finish(mut report: VerificationReport, started: Instant, config: impl Serialize) -> VerificationReport {
    report.runtime_secs = started.elapsed().as_secs_f64();
    report.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    report
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(precondition("slope fit needs at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(precondition("slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

fn default_seed() -> u64 {
    crate::rng::DEFAULT_SEED
}

fn default_slack() -> f64 {
    DEFAULT_SLACK_SE
}

// ---------------------------------------------------------------------------
// Time change

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeChangeConfig {
    pub h: f64,
    /// Constant volatility `sigma` (the noise is `sigma I`).
    pub sigma: f64,
    /// Exponent of `psi(t) = (1+t)^{-a}`; `0` selects `psi = 1`.
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub batch: f64,
    pub x0: f64,
    pub dt: f64,
    /// Horizon `T_w` of the warped process; the original runs to `tau(T_w)`.
    pub horizon: f64,
    #[serde(default = "default_checkpoints")]
    pub n_checkpoints: usize,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_slack")]
    pub slack_se: f64,
    #[serde(default = "default_fraction")]
    pub required_fraction: f64,
}

fn one() -> f64 {
    1.0
}

fn default_checkpoints() -> usize {
    DEFAULT_CHECKPOINTS
}

fn default_fraction() -> f64 {
    0.95
}

fn adjustment_from_power(h: f64, a: f64) -> Result<AdjustmentSchedule> {
    if a == 0.0 {
        AdjustmentSchedule::constant(h)
    } else {
        AdjustmentSchedule::power(h, a)
    }
}

fn batch_from_f64(b: f64) -> Result<BatchSchedule> {
    if b.fract() != 0.0 || b < 1.0 {
        return Err(precondition(format!("batch size must be a positive integer, got {b}")));
    }
    BatchSchedule::constant(b as usize)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.max(0.0).sqrt())
}

/// Compares the law of `X(tau(t))` (annealed flow) with `Y(t)` (warped
/// flow at unit rate) on a 1-d problem: mean and standard deviation at
/// evenly spaced warped times, two-sided within `slack_se` standard errors.
pub fn time_change_experiment(problem: &FiniteSumProblem, cfg: &TimeChangeConfig) -> Result<VerificationReport> {
    let started = Instant::now();
    check_dim(1, problem.dim())?;
    if cfg.n_paths < 2 || cfg.n_checkpoints == 0 {
        return Err(precondition("time change needs at least 2 paths and 1 checkpoint"));
    }
    let adj = adjustment_from_power(cfg.h, cfg.a)?;
    let batch = batch_from_f64(cfg.batch)?;
    let mode = VolatilityMode::Constant(cfg.sigma);
    let x0 = Vector::from_element(1, cfg.x0);
    let horizon_x = adj.phi_inverse(cfg.horizon)?;
    // Warped checkpoints land on the original grid; the warped grid is
    // ten times finer so its rounding stays well below one original step.
    let dt_y = cfg.dt / 10.0;
    let mut pairs = Vec::with_capacity(cfg.n_checkpoints + 1);
    for c in 0..=cfg.n_checkpoints {
        let s = cfg.horizon * c as f64 / cfg.n_checkpoints as f64;
        let kx = (adj.phi_inverse(s)? / cfg.dt).round() as usize;
        let s_exact = adj.phi(kx as f64 * cfg.dt)?;
        let ky = (s_exact / dt_y).round() as usize;
        pairs.push((s_exact, kx, ky));
    }
    let kx_max = pairs.iter().map(|p| p.1).max().unwrap_or(0);
    let ky_max = pairs.iter().map(|p| p.2).max().unwrap_or(0);
    let record = RecordOptions { stride: 1, keep_states: true };
    let sample = |traj: &Trajectory, ks: &mut dyn Iterator<Item = usize>| -> Result<Vec<f64>> {
        ks.map(|k| {
            traj.steps
                .binary_search(&k)
                .map(|i| traj.states[i][0])
                .map_err(|_| precondition(format!("step {k} missing from the trajectory")))
        })
        .collect()
    };
    let xs = collect(par_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let tr = simulate_mb_pgf(problem, &adj, &batch, &x0, cfg.dt, (kx_max.max(1)) as f64 * cfg.dt, mode, record, rng)?;
        if tr.diverged {
            return Err(Error::EnsembleDiverged { diverged: 1, total: 1 });
        }
        sample(&tr, &mut pairs.iter().map(|p| p.1))
    }))?;
    // Independent streams for the warped process.
    let ys = collect(par_paths(cfg.n_paths, cfg.seed ^ 0x5e_ed0f_7e11, |_, rng| {
        let tr = simulate_time_changed(problem, &adj, &batch, &x0, dt_y, (ky_max.max(1)) as f64 * dt_y, mode, record, rng)?;
        if tr.diverged {
            return Err(Error::EnsembleDiverged { diverged: 1, total: 1 });
        }
        sample(&tr, &mut pairs.iter().map(|p| p.2))
    }))?;
    let n = cfg.n_paths as f64;
    let mut points = Vec::with_capacity(2 * pairs.len());
    for (c, (s, _, _)) in pairs.iter().enumerate() {
        let xc: Vec<f64> = xs.iter().map(|p| p[c]).collect();
        let yc: Vec<f64> = ys.iter().map(|p| p[c]).collect();
        let (mx, sx) = mean_std(&xc);
        let (my, sy) = mean_std(&yc);
        let se_mean = ((sx * sx + sy * sy) / n).sqrt();
        let se_std = ((sx * sx + sy * sy) / (2.0 * (n - 1.0))).sqrt();
        points.push(Checkpoint::new("mean", *s, mx, se_mean, my, cfg.slack_se * se_mean, Sidedness::TwoSided));
        points.push(Checkpoint::new("std", *s, sx, se_std, sy, cfg.slack_se * se_std, Sidedness::TwoSided));
    }
    let mut report = VerificationReport::assemble("time_change", points, cfg.required_fraction, cfg.slack_se, cfg.seed, cfg.n_paths);
    report.detail("original_horizon", horizon_x);
    Ok(finish(report, started, cfg))
}

// ---------------------------------------------------------------------------
// Landscape stretching

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub lambda: Vec<f64>,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    /// Constant volatility; `0` runs a single noiseless path.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_landscape_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_slack")]
    pub slack_se: f64,
    /// Allowed deviation of the noiseless curves, in units of `dt |x0|`.
    #[serde(default = "default_ode_factor")]
    pub ode_tolerance_factor: f64,
    /// Allowed deviation of fitted log-log growth slopes of the unstable
    /// coordinates.
    #[serde(default = "default_slope_tol")]
    pub slope_tolerance: f64,
    #[serde(default = "default_landscape_records")]
    pub n_records: usize,
}

fn default_h() -> f64 {
    1e-2
}

fn default_landscape_paths() -> usize {
    1
}

fn default_ode_factor() -> f64 {
    5.0
}

fn default_slope_tol() -> f64 {
    0.02
}

fn default_landscape_records() -> usize {
    200
}

/// Under `psi = 1/(1+t)` on a diagonal quadratic, each coordinate of the
/// mean follows `(1+t)^{-lambda_i} x0_i`; the autonomous equivalent-gradient
/// ODE traces the same curves.
pub fn landscape_stretch_experiment(cfg: &LandscapeConfig) -> Result<VerificationReport> {
    use crate::bounds::{equivalent_gradient_rhs, landscape_stretch_reference};
    let started = Instant::now();
    let d = cfg.lambda.len();
    if d == 0 || cfg.x0.len() != d {
        return Err(precondition("lambda and x0 must be nonempty and of equal length"));
    }
    let problem = make_perturbed_quadratic(&cfg.lambda, Vector::zeros(d), vec![Vector::zeros(d)])?;
    let adj = AdjustmentSchedule::power(cfg.h, 1.0)?;
    let batch = BatchSchedule::constant(1)?;
    let x0 = Vector::from_column_slice(&cfg.x0);
    let n_steps = (cfg.horizon / cfg.dt).round() as usize;
    let stride = (n_steps / cfg.n_records.max(1)).max(1);
    let record = RecordOptions { stride, keep_states: true };
    let tol = cfg.ode_tolerance_factor * cfg.dt * x0.norm();
    let mut points = Vec::new();

    let noisy = cfg.sigma > 0.0;
    let (times, means, ses) = if noisy {
        let run = RunSpec::MbPgf { adj, batch, x0: x0.clone(), dt: cfg.dt, horizon: cfg.horizon, volatility: VolatilityMode::Constant(cfg.sigma) };
        let stats = ensemble_run(&problem, &run, record, cfg.n_paths, cfg.seed)?;
        let st = stats.state.expect("states recorded");
        let ses: Vec<Vec<f64>> = st.var.iter().map(|v| v.iter().map(|x| (x / stats.n_used as f64).sqrt()).collect()).collect();
        (stats.times, st.mean, ses)
    } else {
        let tr = simulate_mb_pgf(&problem, &adj, &batch, &x0, cfg.dt, cfg.horizon, VolatilityMode::Constant(0.0), record, &mut path_rng(cfg.seed, 0))?;
        let means: Vec<Vec<f64>> = tr.states.iter().map(|s| s.iter().cloned().collect()).collect();
        let ses = vec![vec![0.0; d]; tr.len()];
        (tr.times, means, ses)
    };
    for (i, t) in times.iter().enumerate() {
        for c in 0..d {
            let reference = landscape_stretch_reference(cfg.lambda[c], cfg.x0[c], *t)?;
            let allowed = if noisy { cfg.slack_se * ses[i][c] + tol } else { tol };
            points.push(Checkpoint::new(format!("flow[{c}]"), *t, means[i][c], ses[i][c], reference, allowed, Sidedness::TwoSided));
        }
    }

    // Autonomous equivalent-gradient ODE, explicit Euler with the same dt.
    let mut u = cfg.x0.clone();
    let mut ode_max_err = 0.0_f64;
    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        if k % stride == 0 || k == n_steps {
            for c in 0..d {
                let reference = landscape_stretch_reference(cfg.lambda[c], cfg.x0[c], t)?;
                ode_max_err = ode_max_err.max((u[c] - reference).abs());
                if k % (stride * 10) == 0 || k == n_steps {
                    points.push(Checkpoint::new(format!("ode[{c}]"), t, u[c], 0.0, reference, tol, Sidedness::TwoSided));
                }
            }
        }
        if k == n_steps {
            break;
        }
        for c in 0..d {
            if cfg.lambda[c] != 0.0 && cfg.x0[c] != 0.0 {
                u[c] += cfg.dt * equivalent_gradient_rhs(cfg.lambda[c], cfg.x0[c], u[c])?;
            }
        }
    }

    let mut report = VerificationReport::assemble("landscape_stretch", points, 1.0, cfg.slack_se, cfg.seed, if noisy { cfg.n_paths } else { 1 });
    report.detail("tolerance", tol);
    report.detail("ode_max_error", ode_max_err);
    // Growth slopes of unstable coordinates in log-log against 1 + t.
    for c in 0..d {
        if cfg.lambda[c] < 0.0 && cfg.x0[c] != 0.0 {
            let (lx, ly): (Vec<f64>, Vec<f64>) = times
                .iter()
                .zip(&means)
                .filter(|(t, m)| **t > 0.0 && m[c] / cfg.x0[c] > 0.0)
                .map(|(t, m)| (t.ln_1p(), (m[c] / cfg.x0[c]).ln()))
                .unzip();
            let slope = fit_slope(&lx, &ly)?;
            report.detail(&format!("growth_slope[{c}]"), slope);
            report.require(&format!("growth_slope_ok[{c}]"), (slope + cfg.lambda[c]).abs() <= cfg.slope_tolerance);
        }
    }
    Ok(finish(report, started, cfg))
}

// ---------------------------------------------------------------------------
// Weak error

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakErrorConfig {
    pub h_list: Vec<f64>,
    pub horizon: f64,
    pub x0: Vec<f64>,
    #[serde(default = "one_usize")]
    pub batch: usize,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_slope_range")]
    pub slope_range: (f64, f64),
    #[serde(default = "default_ratio_range")]
    pub ratio_range: (f64, f64),
}

fn one_usize() -> usize {
    1
}

fn default_slope_range() -> (f64, f64) {
    (0.7, 1.3)
}

fn default_ratio_range() -> (f64, f64) {
    (1.6, 2.4)
}

/// `|E[x_K] - E[X(K h)]|` for MB-SGD against the exact mean of the flow on
/// a quadratic, for each stepsize; order one means the error halves with h.
pub fn weak_error_experiment(problem: &FiniteSumProblem, cfg: &WeakErrorConfig) -> Result<VerificationReport> {
    let started = Instant::now();
    let hessian = problem
        .hessian()
        .ok_or_else(|| Error::UnsupportedProblem("weak error needs a quadratic problem".into()))?
        .clone();
    let x0 = Vector::from_column_slice(&cfg.x0);
    check_dim(problem.dim(), x0.len())?;
    if cfg.h_list.len() < 2 {
        return Err(precondition("weak error needs at least two stepsizes"));
    }
    let exact = problem.x_star() + sym_expm_neg_apply(&hessian, cfg.horizon, &(&x0 - problem.x_star()));
    let batch = BatchSchedule::constant(cfg.batch)?;
    let mut errors = Vec::with_capacity(cfg.h_list.len());
    let mut points = Vec::new();
    for (idx, &h) in cfg.h_list.iter().enumerate() {
        let steps = cfg.horizon / h;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(precondition(format!("horizon {} is not a multiple of h = {h}", cfg.horizon)));
        }
        let adj = AdjustmentSchedule::constant(h)?;
        let record = RecordOptions { stride: usize::MAX, keep_states: true };
        let seed = cfg.seed.wrapping_add(idx as u64 * 0x9e37_79b9);
        let finals = collect(par_paths(cfg.n_paths, seed, |_, rng| {
            let tr = run_mb_sgd(problem, &adj, &batch, &x0, steps.round() as usize, record, rng)?;
            if tr.diverged {
                return Err(Error::EnsembleDiverged { diverged: 1, total: 1 });
            }
            Ok(tr.last_state().expect("final state recorded").as_slice().to_vec())
        }))?;
        let mut m = Moments::new(problem.dim());
        for f in &finals {
            m.add(f);
        }
        let mean = Vector::from_column_slice(m.mean());
        let err = (&mean - &exact).norm();
        let se = m.variance().iter().sum::<f64>().sqrt() / (cfg.n_paths as f64).sqrt();
        errors.push((h, err, se));
    }
    for w in errors.windows(2) {
        let (h0, e0, s0) = w[0];
        let (h1, e1, s1) = w[1];
        let ratio = e0 / e1;
        let expected = h0 / h1;
        let se = ratio * ((s0 / e0).powi(2) + (s1 / e1).powi(2)).sqrt();
        let (lo, hi) = (cfg.ratio_range.0 * expected / 2.0, cfg.ratio_range.1 * expected / 2.0);
        let mut c = Checkpoint::new(format!("ratio h={h0}/h={h1}"), h1, ratio, se, 0.5 * (lo + hi), 0.5 * (hi - lo), Sidedness::TwoSided);
        c.pass = ratio >= lo && ratio <= hi;
        points.push(c);
    }
    let lx: Vec<f64> = errors.iter().map(|e| e.0.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.1.ln()).collect();
    let slope = fit_slope(&lx, &ly)?;
    let mut report = VerificationReport::assemble("weak_error", points, 1.0, 0.0, cfg.seed, cfg.n_paths);
    report.detail("slope", slope);
    report.detail("errors", errors.iter().map(|e| [e.0, e.1, e.2]).collect::<Vec<_>>());
    report.require("slope_in_range", slope >= cfg.slope_range.0 && slope <= cfg.slope_range.1);
    Ok(finish(report, started, cfg))
}

// ---------------------------------------------------------------------------
// Convergence ball

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMode {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub h: f64,
    #[serde(default = "one_usize")]
    pub batch: usize,
    /// Euler step of the continuous model (ignored in discrete mode).
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub mode: BallMode,
    /// Start as offset from `x*` along the all-ones direction.
    #[serde(default)]
    pub x0_offset: f64,
    /// The tail window is the last `tail_fraction` of the horizon.
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_slack")]
    pub slack_se: f64,
    #[serde(default = "default_ball_stride")]
    pub stride: usize,
}

fn default_tail() -> f64 {
    0.5
}

fn default_rel_tol() -> f64 {
    0.1
}

fn default_ball_stride() -> usize {
    10
}

/// Stationary `E[f - f*]` of the model on `(mu/2)|x - x*|^2` with noise
/// covariance `sigma*^2 I / b`: `h d sigma*^2 / (4 b)` for the flow and
/// `h d sigma*^2 / (2 b (2 - h mu))` for SGD.
pub fn stationary_level(mode: BallMode, mu: f64, d: usize, h: f64, b: usize, sigma_star_sq: f64) -> f64 {
    let base = h * d as f64 * sigma_star_sq / b as f64;
    match mode {
        BallMode::Continuous => base / 4.0,
        BallMode::Discrete => base / (2.0 * (2.0 - h * mu)),
    }
}

/// Time-averaged tail of `E[f - f*]` against the ball bound (one-sided)
/// and the exact stationary level (relative tolerance).
pub fn ball_experiment(problem: &FiniteSumProblem, cfg: &BallConfig) -> Result<VerificationReport> {
    use crate::bounds::{ball_limit, BoundInputs};
    let started = Instant::now();
    let mu = problem
        .isotropic_curvature()
        .ok_or_else(|| Error::UnsupportedProblem("ball experiment needs an isotropic quadratic".into()))?;
    let d = problem.dim();
    let sigma2 = problem.constants().sigma_star_sq()?;
    // The flow's volatility is taken as the constant sigma* I; confirm the
    // problem's covariance really is isotropic before doing so.
    let cov = sigma_mb_matrix(problem, problem.x_star())?;
    let iso = crate::Matrix::identity(d, d) * sigma2;
    if (&cov - &iso).amax() > 1e-9 * (1.0 + sigma2) {
        return Err(Error::UnsupportedProblem("ball experiment needs covariance sigma*^2 I".into()));
    }
    if !(cfg.tail_fraction > 0.0 && cfg.tail_fraction <= 1.0) {
        return Err(precondition("tail_fraction must lie in (0, 1]"));
    }
    let adj = AdjustmentSchedule::constant(cfg.h)?;
    let batch = BatchSchedule::constant(cfg.batch)?;
    let x0 = problem.x_star() + Vector::from_element(d, cfg.x0_offset);
    let record = RecordOptions { stride: cfg.stride.max(1), keep_states: false };
    let (run, kind) = match cfg.mode {
        BallMode::Continuous => (
            RunSpec::MbPgf { adj, batch, x0: x0.clone(), dt: cfg.dt, horizon: cfg.horizon, volatility: VolatilityMode::Constant(sigma2.sqrt()) },
            RateKind::PlCt,
        ),
        BallMode::Discrete => (
            RunSpec::Sgd { adj, batch, x0: x0.clone(), n_steps: (cfg.horizon / cfg.h).round() as usize },
            RateKind::PlDt,
        ),
    };
    let t_start = cfg.horizon * (1.0 - cfg.tail_fraction);
    let tails = collect(par_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let tr = run.simulate(problem, record, rng)?;
        if tr.diverged {
            return Err(Error::EnsembleDiverged { diverged: 1, total: 1 });
        }
        let window: Vec<f64> =
            tr.times.iter().zip(&tr.observables).filter(|(t, _)| **t >= t_start - 1e-12).map(|(_, o)| o.f_gap).collect();
        Ok(window.iter().sum::<f64>() / window.len().max(1) as f64)
    }))?;
    let mut m = Moments::new(1);
    for t in &tails {
        m.add(&[*t]);
    }
    let tail = m.mean()[0];
    let se = m.standard_error()[0];
    let inputs = BoundInputs::from_problem(problem, adj, batch, &x0)?;
    let bound = ball_limit(&inputs, kind)?;
    let level = stationary_level(cfg.mode, mu, d, cfg.h, cfg.batch, sigma2);
    let points = vec![
        Checkpoint::new("tail<=ball", cfg.horizon, tail, se, bound, cfg.slack_se * se, Sidedness::OneSided),
        Checkpoint::new("tail~stationary", cfg.horizon, tail, se, level, cfg.rel_tol * level, Sidedness::TwoSided),
    ];
    let mut report = VerificationReport::assemble("ball", points, 1.0, cfg.slack_se, cfg.seed, cfg.n_paths);
    report.detail("tail_mean", tail);
    report.detail("tail_se", se);
    report.detail("ball_bound", bound);
    report.detail("stationary_level", level);
    report.detail("relative_error", (tail - level) / level);
    Ok(finish(report, started, cfg))
}

// ---------------------------------------------------------------------------
// SVRG contraction

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SvrgModel {
    Discrete,
    /// The delay-equation model with Option II jumps, Euler step `dt`.
    Sdde { dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrgConfig {
    pub h: f64,
    pub epoch_steps: usize,
    pub n_epochs: usize,
    pub x0: Vec<f64>,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: SvrgModel,
    #[serde(default = "default_slack")]
    pub slack_se: f64,
}

/// `E|x_{jm} - x*|^2 <= rho^j |x0 - x*|^2` at every epoch start.
pub fn svrg_contraction_experiment(problem: &FiniteSumProblem, cfg: &SvrgConfig) -> Result<VerificationReport> {
    use crate::bounds::BoundInputs;
    let started = Instant::now();
    let x0 = Vector::from_column_slice(&cfg.x0);
    let adj = AdjustmentSchedule::constant(cfg.h)?;
    let inputs = BoundInputs::from_problem(problem, adj, BatchSchedule::constant(1)?, &x0)?.with_epoch_steps(cfg.epoch_steps);
    let (run, kind) = match cfg.model {
        SvrgModel::Discrete => {
            (RunSpec::Svrg { h: cfg.h, epoch_steps: cfg.epoch_steps, n_epochs: cfg.n_epochs, x0: x0.clone() }, RateKind::VrDt)
        }
        SvrgModel::Sdde { dt } => (
            RunSpec::VrPgf {
                h: cfg.h,
                epoch_steps: cfg.epoch_steps,
                x0: x0.clone(),
                dt,
                horizon: cfg.n_epochs as f64 * cfg.epoch_steps as f64 * cfg.h,
                with_jumps: true,
            },
            RateKind::VrCt,
        ),
    };
    let bound = RateBound::new(kind, inputs)?;
    let stride = match cfg.model {
        SvrgModel::Discrete => cfg.epoch_steps,
        SvrgModel::Sdde { dt } => (cfg.epoch_steps as f64 * cfg.h / dt).round() as usize,
    };
    let stats = ensemble_run(problem, &run, RecordOptions { stride, keep_states: false }, cfg.n_paths, cfg.seed)?;
    let epochs: Vec<usize> = (1..stats.len()).collect();
    let mut report = verify_bound(&stats, &bound, cfg.slack_se, Some(&epochs))?;
    report.experiment = "svrg_contraction".into();
    report.seed = cfg.seed;
    report.detail("rho", bound.value(1.0)? / bound.inputs.dist0_sq);
    Ok(finish(report, started, cfg))
}

// ---------------------------------------------------------------------------
// Asymptotic exponent

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub h: f64,
    pub a: f64,
    #[serde(default = "one_usize")]
    pub batch: usize,
    pub x0: Vec<f64>,
    pub n_steps: usize,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_exp_stride")]
    pub stride: usize,
    /// Fit over `t` in `[t_end / fit_decades_factor, t_end]`.
    #[serde(default = "default_decade")]
    pub fit_span: f64,
    #[serde(default = "default_exp_tol")]
    pub tolerance: f64,
}

fn default_exp_stride() -> usize {
    100
}

fn default_decade() -> f64 {
    10.0
}

fn default_exp_tol() -> f64 {
    0.15
}

/// Log-log slope of `E[f(x_k) - f*]` over the final decade of an MB-SGD run
/// with `psi = (1+t)^{-a}` against the PL exponent `-a`.
pub fn exponent_experiment(problem: &FiniteSumProblem, cfg: &ExponentConfig) -> Result<VerificationReport> {
    let started = Instant::now();
    let adj = AdjustmentSchedule::power(cfg.h, cfg.a)?;
    let beta = asymptotic_exponent(cfg.a, AsymptoticClass::Pl)?
        .exponent()
        .ok_or_else(|| precondition("no rate to compare against"))?;
    let run = RunSpec::Sgd { adj, batch: BatchSchedule::constant(cfg.batch)?, x0: Vector::from_column_slice(&cfg.x0), n_steps: cfg.n_steps };
    let stats = ensemble_run(problem, &run, RecordOptions { stride: cfg.stride.max(1), keep_states: false }, cfg.n_paths, cfg.seed)?;
    let t_end = *stats.times.last().expect("nonempty grid");
    let (lx, ly): (Vec<f64>, Vec<f64>) = stats
        .times
        .iter()
        .zip(&stats.observables.f_gap.mean)
        .filter(|(t, m)| **t >= t_end / cfg.fit_span && **m > 0.0)
        .map(|(t, m)| (t.ln(), m.ln()))
        .unzip();
    let slope = fit_slope(&lx, &ly)?;
    let points = vec![Checkpoint::new("slope", t_end, slope, 0.0, -beta, cfg.tolerance, Sidedness::TwoSided)];
    let mut report = VerificationReport::assemble("exponent", points, 1.0, 0.0, cfg.seed, cfg.n_paths);
    report.divergence_count = stats.divergence_count;
    report.detail("slope", slope);
    report.detail("expected", -beta);
    Ok(finish(report, started, cfg))
}

// ---------------------------------------------------------------------------
// Lyapunov probe

/// Supermartingale check of the PL energy `e^{2 mu phi(t)} (f - f*)` along a
/// flow run: between consecutive recorded times its mean may grow by at
/// most the injected noise `(h d L sigma*^2 / 2) int e^{2 mu phi} psi^2 / b`,
/// up to `slack_se` standard errors of the per-path increment.
pub fn lyapunov_probe(
    problem: &FiniteSumProblem,
    adj: &AdjustmentSchedule,
    batch: &BatchSchedule,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    stride: usize,
    n_paths: usize,
    seed: u64,
    slack_se: f64,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let c = problem.constants();
    let mu = c.mu_pl()?;
    let noise = adj.h() * problem.dim() as f64 * c.l * c.sigma_star_sq()? / 2.0;
    let record = RecordOptions { stride: stride.max(1), keep_states: true };
    let paths = collect(par_paths(n_paths, seed, |_, rng| {
        let tr = simulate_mb_pgf(problem, adj, batch, x0, dt, horizon, VolatilityMode::Exact, record, rng)?;
        if tr.diverged {
            return Err(Error::EnsembleDiverged { diverged: 1, total: 1 });
        }
        let e: Result<Vec<f64>> =
            tr.states.iter().zip(&tr.times).map(|(x, t)| lyapunov_energy(EnergyKind::Pl, problem, adj, x, *t)).collect();
        Ok((tr.times, e?))
    }))?;
    let times = paths[0].0.clone();
    let mut m = Moments::new(times.len().saturating_sub(1));
    for (_, e) in &paths {
        let inc: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        m.add(&inc);
    }
    let se = m.standard_error();
    let mut points = Vec::new();
    for i in geometric_checkpoints(times.len(), DEFAULT_CHECKPOINTS) {
        let (t0, t1) = (times[i - 1], times[i]);
        let inject = noise
            * crate::quadrature::integrate(
                |s| (2.0 * mu * adj.phi_unchecked(s)).exp() * adj.psi(s).powi(2) / batch.b(s),
                t0,
                t1,
                1e-10,
                0.0,
                1,
            )
            .value;
        points.push(Checkpoint::new("energy_increment", t1, m.mean()[i - 1], se[i - 1], inject, slack_se * se[i - 1], Sidedness::OneSided));
    }
    let report = VerificationReport::assemble("lyapunov_pl", points, 1.0, slack_se, seed, n_paths);
    Ok(finish(report, started, serde_json::json!({ "dt": dt, "horizon": horizon, "stride": stride })))
}
