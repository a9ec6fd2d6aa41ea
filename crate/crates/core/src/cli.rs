//! Config parsing and the `pgf` command-line front end.
//!
//! A run config is a TOML file (JSON also accepted, chosen by extension)
//! with the sections `[problem]`, `[schedule]`, `[simulation]`,
//! `[ensemble]`, `[output]`, optional `[bound]` and `[experiment]`, and one
//! optional section per named experiment. Unknown keys are rejected.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bounds::{check_admissible, BoundInputs, RateBound, RateKind};
use crate::continuous::VolatilityMode;
use crate::error::{Error, Result};
use crate::harness::{
    ball_experiment, ensemble_run, exponent_experiment, landscape_stretch_experiment, lyapunov_probe,
    svrg_contraction_experiment, time_change_experiment, verify_bound, weak_error_experiment, BallConfig,
    EnsembleStats, ExponentConfig, LandscapeConfig, RunSpec, SvrgConfig, TimeChangeConfig, VerificationReport,
    WeakErrorConfig, DEFAULT_SLACK_SE,
};
use crate::io::{fmt_f64, write_table_csv, write_trajectory_csv};
use crate::problems::{
    isotropic_with_noise, make_perturbed_quadratic, rsi_mixture, two_point_1d, FiniteSumProblem, ProblemConstants,
};
use crate::rng::{path_rng, DEFAULT_SEED};
use crate::schedules::{Adjustment, AdjustmentSchedule, BatchSchedule};
use crate::trajectory::RecordOptions;
use crate::Vector;

/// Names accepted by `verify`.
pub const EXPERIMENTS: [&str; 8] =
    ["bound", "time_change", "landscape_stretch", "weak_error", "ball", "svrg_contraction", "exponent", "lyapunov"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Diagonal quadratic with additive component noise `c_i` (summing to zero).
    PerturbedQuadratic {
        eigenvalues: Vec<f64>,
        #[serde(default)]
        x_star: Option<Vec<f64>>,
        noise_vectors: Vec<Vec<f64>>,
        #[serde(default)]
        constants: Option<ProblemConstants>,
    },
    /// `(mu/2)|x|^2` with one-sample covariance `sigma_star_sq I`.
    Isotropic {
        mu: f64,
        dim: usize,
        #[serde(default)]
        sigma_star_sq: f64,
        #[serde(default)]
        constants: Option<ProblemConstants>,
    },
    TwoPoint {
        #[serde(default)]
        constants: Option<ProblemConstants>,
    },
    /// Components differing only in curvature.
    RsiMixture {
        mean_eigenvalues: Vec<f64>,
        deviation: f64,
        #[serde(default)]
        constants: Option<ProblemConstants>,
    },
}

impl ProblemConfig {
    pub fn build(&self) -> Result<FiniteSumProblem> {
        let (problem, constants) = match self {
            ProblemConfig::PerturbedQuadratic { eigenvalues, x_star, noise_vectors, constants } => {
                let x_star = x_star.clone().unwrap_or_else(|| vec![0.0; eigenvalues.len()]);
                let noise = noise_vectors.iter().map(|c| Vector::from_column_slice(c)).collect();
                (make_perturbed_quadratic(eigenvalues, Vector::from_column_slice(&x_star), noise)?, constants)
            }
            ProblemConfig::Isotropic { mu, dim, sigma_star_sq, constants } => {
                (isotropic_with_noise(*mu, *dim, *sigma_star_sq)?, constants)
            }
            ProblemConfig::TwoPoint { constants } => (two_point_1d()?, constants),
            ProblemConfig::RsiMixture { mean_eigenvalues, deviation, constants } => {
                (rsi_mixture(mean_eigenvalues, *deviation)?, constants)
            }
        };
        match constants {
            Some(c) => problem.with_constants(c.clone()),
            None => Ok(problem),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    #[default]
    Constant,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub h: f64,
    #[serde(default)]
    pub psi: PsiKind,
    /// Exponent for `psi = power`.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default = "one")]
    pub batch: usize,
    /// Linear batch growth `b(t) = batch + batch_rate t`.
    #[serde(default)]
    pub batch_rate: Option<f64>,
    /// SVRG epoch length `m`.
    #[serde(default)]
    pub epoch_steps: Option<usize>,
}

fn one() -> usize {
    1
}

impl ScheduleConfig {
    pub fn adjustment(&self) -> Result<AdjustmentSchedule> {
        match (self.psi, self.a) {
            (PsiKind::Constant, None) => AdjustmentSchedule::new(self.h, Adjustment::Constant),
            (PsiKind::Constant, Some(_)) => Err(Error::Config("`a` is only valid with psi = \"power\"".into())),
            (PsiKind::Power, Some(a)) => AdjustmentSchedule::power(self.h, a),
            (PsiKind::Power, None) => Err(Error::Config("psi = \"power\" needs the exponent `a`".into())),
        }
    }

    pub fn batch(&self) -> Result<BatchSchedule> {
        let b = match self.batch_rate {
            None => BatchSchedule::Constant { b: self.batch },
            Some(rate) => BatchSchedule::Linear { b0: self.batch as f64, rate },
        };
        b.validate()?;
        Ok(b)
    }

    fn epoch_steps(&self) -> Result<usize> {
        self.epoch_steps.ok_or_else(|| Error::Config("schedule.epoch_steps is required for SVRG runs".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Sgd,
    Pgd,
    Svrg,
    MbPgf,
    VrPgf,
    TimeChanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub mode: SimMode,
    pub x0: Vec<f64>,
    /// Euler step of the continuous models.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub n_epochs: Option<usize>,
    /// Constant volatility; the exact covariance root when absent.
    #[serde(default)]
    pub volatility: Option<f64>,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "yes")]
    pub with_jumps: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "one")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { n_paths: 1, seed: DEFAULT_SEED }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out(), format: Format::Csv }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kinds: Vec<RateKind>,
    /// Evaluation points (times, steps or epochs); the simulation grid when absent.
    #[serde(default)]
    pub at: Option<Vec<f64>>,
    #[serde(default = "default_slack")]
    pub slack_se: f64,
}

fn default_slack() -> f64 {
    DEFAULT_SLACK_SE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bound: Option<BoundConfig>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub time_change: Option<TimeChangeConfig>,
    #[serde(default)]
    pub landscape_stretch: Option<LandscapeConfig>,
    #[serde(default)]
    pub weak_error: Option<WeakErrorConfig>,
    #[serde(default)]
    pub ball: Option<BallConfig>,
    #[serde(default)]
    pub svrg_contraction: Option<SvrgConfig>,
    #[serde(default)]
    pub exponent: Option<ExponentConfig>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.ensemble.seed = seed;
            for_each_section(self, |c| c.set_seed(seed));
        }
        if let Some(n) = o.paths {
            self.ensemble.n_paths = n;
            for_each_section(self, |c| c.set_paths(n));
        }
        if let Some(dt) = o.dt {
            if let Some(s) = self.simulation.as_mut() {
                s.dt = Some(dt);
            }
            if let Some(c) = self.time_change.as_mut() {
                c.dt = dt;
            }
            if let Some(c) = self.landscape_stretch.as_mut() {
                c.dt = dt;
            }
            if let Some(c) = self.ball.as_mut() {
                c.dt = dt;
            }
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
    }

    pub fn problem(&self) -> Result<FiniteSumProblem> {
        self.problem.as_ref().ok_or_else(|| Error::Config("missing [problem] section".into()))?.build()
    }

    fn schedule(&self) -> Result<&ScheduleConfig> {
        self.schedule.as_ref().ok_or_else(|| Error::Config("missing [schedule] section".into()))
    }

    fn simulation(&self) -> Result<&SimulationConfig> {
        self.simulation.as_ref().ok_or_else(|| Error::Config("missing [simulation] section".into()))
    }

    /// The simulation described by `[schedule]` and `[simulation]`.
    pub fn run_spec(&self) -> Result<RunSpec> {
        let sch = self.schedule()?;
        let sim = self.simulation()?;
        let x0 = Vector::from_column_slice(&sim.x0);
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("simulation.{key} is required for this mode")));
        let steps = |v: Option<usize>, key: &str| v.ok_or_else(|| Error::Config(format!("simulation.{key} is required for this mode")));
        let volatility = sim.volatility.map_or(VolatilityMode::Exact, VolatilityMode::Constant);
        Ok(match sim.mode {
            SimMode::Sgd => RunSpec::Sgd { adj: sch.adjustment()?, batch: sch.batch()?, x0, n_steps: steps(sim.n_steps, "n_steps")? },
            SimMode::Pgd => RunSpec::Pgd { adj: sch.adjustment()?, batch: sch.batch()?, x0, n_steps: steps(sim.n_steps, "n_steps")? },
            SimMode::Svrg => {
                RunSpec::Svrg { h: sch.h, epoch_steps: sch.epoch_steps()?, n_epochs: steps(sim.n_epochs, "n_epochs")?, x0 }
            }
            SimMode::MbPgf => RunSpec::MbPgf {
                adj: sch.adjustment()?,
                batch: sch.batch()?,
                x0,
                dt: need(sim.dt, "dt")?,
                horizon: need(sim.horizon, "horizon")?,
                volatility,
            },
            SimMode::VrPgf => RunSpec::VrPgf {
                h: sch.h,
                epoch_steps: sch.epoch_steps()?,
                x0,
                dt: need(sim.dt, "dt")?,
                horizon: need(sim.horizon, "horizon")?,
                with_jumps: sim.with_jumps,
            },
            SimMode::TimeChanged => RunSpec::TimeChanged {
                adj: sch.adjustment()?,
                batch: sch.batch()?,
                x0,
                dt: need(sim.dt, "dt")?,
                horizon: need(sim.horizon, "horizon")?,
                volatility,
            },
        })
    }

    pub fn bound_inputs(&self, problem: &FiniteSumProblem) -> Result<BoundInputs> {
        let sch = self.schedule()?;
        let x0 = Vector::from_column_slice(&self.simulation()?.x0);
        let inputs = BoundInputs::from_problem(problem, sch.adjustment()?, sch.batch()?, &x0)?;
        Ok(match sch.epoch_steps {
            Some(m) => inputs.with_epoch_steps(m),
            None => inputs,
        })
    }

    /// Cross-field checks that need the built problem, including the
    /// admissibility of every requested bound.
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.schedule {
            s.adjustment()?;
            s.batch()?;
        }
        if self.simulation.is_some() {
            let problem = self.problem()?;
            crate::error::check_dim(problem.dim(), self.simulation()?.x0.len())?;
            self.run_spec()?;
            if let Some(b) = &self.bound {
                let inputs = self.bound_inputs(&problem)?;
                for kind in &b.kinds {
                    check_admissible(&inputs, *kind)?;
                }
            }
        }
        Ok(())
    }

    fn record(&self) -> RecordOptions {
        RecordOptions { stride: self.simulation.as_ref().map_or(1, |s| s.stride.max(1)), keep_states: false }
    }
}

fn for_each_section(cfg: &mut RunConfig, f: impl Fn(&mut dyn SeedPaths)) {
    if let Some(c) = cfg.time_change.as_mut() {
        f(c);
    }
    if let Some(c) = cfg.landscape_stretch.as_mut() {
        f(c);
    }
    if let Some(c) = cfg.weak_error.as_mut() {
        f(c);
    }
    if let Some(c) = cfg.ball.as_mut() {
        f(c);
    }
    if let Some(c) = cfg.svrg_contraction.as_mut() {
        f(c);
    }
    if let Some(c) = cfg.exponent.as_mut() {
        f(c);
    }
}

/// Experiment sections carrying their own seed and path count.
pub trait SeedPaths {
    fn set_seed(&mut self, seed: u64);
    fn set_paths(&mut self, n: usize);
}

macro_rules! seed_paths {
    ($($t:ty),*) => {$(
        impl SeedPaths for $t {
            fn set_seed(&mut self, seed: u64) { self.seed = seed; }
            fn set_paths(&mut self, n: usize) { self.n_paths = n; }
        }
    )*};
}
seed_paths!(TimeChangeConfig, LandscapeConfig, WeakErrorConfig, BallConfig, SvrgConfig, ExponentConfig);

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.join(name))
}

fn write_ensemble<W: Write>(out: &mut W, stats: &EnsembleStats) -> Result<()> {
    writeln!(out, "t,step,f_gap_mean,f_gap_se,grad_norm_sq_mean,grad_norm_sq_se,dist_sq_mean,dist_sq_se")?;
    let o = &stats.observables;
    for i in 0..stats.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(stats.times[i]),
            stats.steps[i],
            fmt_f64(o.f_gap.mean[i]),
            fmt_f64(o.f_gap.se[i]),
            fmt_f64(o.grad_norm_sq.mean[i]),
            fmt_f64(o.grad_norm_sq.se[i]),
            fmt_f64(o.dist_sq.mean[i]),
            fmt_f64(o.dist_sq.se[i])
        )?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

/// Simulates the configured run; one path writes its trajectory, several
/// write ensemble statistics. Returns the file written.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let run = cfg.run_spec()?;
    let record = cfg.record();
    let json = cfg.output.format == Format::Json;
    if cfg.ensemble.n_paths == 1 {
        let traj = run.simulate(&problem, record, &mut path_rng(cfg.ensemble.seed, 0))?;
        let path = out_file(cfg, if json { "trajectory.json" } else { "trajectory.csv" })?;
        let mut f = fs::File::create(&path)?;
        if json {
            let rows: Vec<_> = (0..traj.len())
                .map(|i| serde_json::json!({ "t": traj.times[i], "step": traj.steps[i], "observation": traj.observables[i], "flags": traj.flags[i] }))
                .collect();
            writeln!(f, "{}", to_json(&serde_json::json!({ "diverged": traj.diverged, "records": rows }))?)?;
        } else {
            write_trajectory_csv(&mut f, &traj)?;
        }
        return Ok(path);
    }
    let stats = ensemble_run(&problem, &run, record, cfg.ensemble.n_paths, cfg.ensemble.seed)?;
    let path = out_file(cfg, if json { "ensemble.json" } else { "ensemble.csv" })?;
    let mut f = fs::File::create(&path)?;
    if json {
        writeln!(f, "{}", to_json(&stats)?)?;
    } else {
        write_ensemble(&mut f, &stats)?;
    }
    Ok(path)
}

/// Evaluation points: `[bound] at`, or the simulation grid in the bound's
/// own index (time, step or epoch).
fn bound_grid(cfg: &RunConfig, kind: RateKind) -> Result<Vec<f64>> {
    if let Some(at) = cfg.bound.as_ref().and_then(|b| b.at.clone()) {
        return Ok(at);
    }
    let sim = cfg.simulation()?;
    let stride = sim.stride.max(1);
    if kind.is_variance_reduced() {
        let n = match (sim.n_epochs, sim.horizon) {
            (Some(n), _) => n,
            (None, Some(t)) => {
                let sch = cfg.schedule()?;
                (t / (sch.epoch_steps()? as f64 * sch.h)).floor() as usize
            }
            _ => return Err(Error::Config("simulation.n_epochs or horizon is required".into())),
        };
        return Ok((0..=n).map(|j| j as f64).collect());
    }
    if kind.is_discrete() {
        let n = sim.n_steps.ok_or_else(|| Error::Config("simulation.n_steps is required for discrete bounds".into()))?;
        let mut ks: Vec<f64> = (0..=n).step_by(stride).map(|k| k as f64).collect();
        if n % stride != 0 {
            ks.push(n as f64);
        }
        return Ok(ks);
    }
    let dt = sim.dt.ok_or_else(|| Error::Config("simulation.dt is required for continuous bounds".into()))?;
    let horizon = sim.horizon.ok_or_else(|| Error::Config("simulation.horizon is required for continuous bounds".into()))?;
    let n = (horizon / dt).round() as usize;
    let mut ts: Vec<f64> = (0..=n).step_by(stride).map(|k| k as f64 * dt).collect();
    if !n.is_multiple_of(stride) {
        ts.push(n as f64 * dt);
    }
    Ok(ts)
}

/// Writes `(t, bound)` for one bound kind.
pub fn cmd_bound(cfg: &RunConfig, kind: RateKind) -> Result<PathBuf> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let bound = RateBound::new(kind, cfg.bound_inputs(&problem)?)?;
    let grid = bound_grid(cfg, kind)?;
    let values = bound.values(&grid)?;
    let stem = format!("bound_{}", kind.name().to_lowercase());
    if cfg.output.format == Format::Json {
        let path = out_file(cfg, &format!("{stem}.json"))?;
        let body = serde_json::json!({ "kind": kind, "t": grid, "bound": values });
        fs::write(&path, to_json(&body)? + "\n")?;
        Ok(path)
    } else {
        let path = out_file(cfg, &format!("{stem}.csv"))?;
        let rows: Vec<Vec<f64>> = grid.iter().zip(&values).map(|(t, b)| vec![*t, *b]).collect();
        let mut f = fs::File::create(&path)?;
        write_table_csv(&mut f, &["t", "bound"], &rows)?;
        Ok(path)
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("experiment `{name}` needs a [{name}] section")))
}

/// Runs a named experiment and returns its report.
pub fn run_experiment(cfg: &RunConfig, name: &str) -> Result<VerificationReport> {
    cfg.validate()?;
    match name {
        "bound" => verify_bounds(cfg),
        "time_change" => time_change_experiment(&cfg.problem()?, section(&cfg.time_change, name)?),
        "landscape_stretch" => landscape_stretch_experiment(section(&cfg.landscape_stretch, name)?),
        "weak_error" => weak_error_experiment(&cfg.problem()?, section(&cfg.weak_error, name)?),
        "ball" => ball_experiment(&cfg.problem()?, section(&cfg.ball, name)?),
        "svrg_contraction" => svrg_contraction_experiment(&cfg.problem()?, section(&cfg.svrg_contraction, name)?),
        "exponent" => exponent_experiment(&cfg.problem()?, section(&cfg.exponent, name)?),
        "lyapunov" => {
            let problem = cfg.problem()?;
            let sch = cfg.schedule()?;
            let sim = cfg.simulation()?;
            let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("simulation.{key} is required")));
            lyapunov_probe(
                &problem,
                &sch.adjustment()?,
                &sch.batch()?,
                &Vector::from_column_slice(&sim.x0),
                need(sim.dt, "dt")?,
                need(sim.horizon, "horizon")?,
                sim.stride,
                cfg.ensemble.n_paths,
                cfg.ensemble.seed,
                DEFAULT_SLACK_SE,
            )
        }
        other => Err(Error::Config(format!("unknown experiment `{other}`; expected one of {}", EXPERIMENTS.join(", ")))),
    }
}

/// Simulates the configured ensemble and checks every `[bound]` kind.
fn verify_bounds(cfg: &RunConfig) -> Result<VerificationReport> {
    let started = std::time::Instant::now();
    let b = section(&cfg.bound, "bound")?;
    let problem = cfg.problem()?;
    let run = cfg.run_spec()?;
    let stats = ensemble_run(&problem, &run, cfg.record(), cfg.ensemble.n_paths, cfg.ensemble.seed)?;
    let inputs = cfg.bound_inputs(&problem)?;
    let mut merged: Option<VerificationReport> = None;
    for kind in &b.kinds {
        if kind.is_discrete() != run.is_discrete() {
            return Err(Error::Config(format!("bound {kind} does not apply to simulation mode {:?}", cfg.simulation()?.mode)));
        }
        let rep = verify_bound(&stats, &RateBound::new(*kind, inputs.clone())?, b.slack_se, None)?;
        merged = Some(match merged {
            None => rep,
            Some(mut m) => {
                m.pass &= rep.pass;
                m.max_violation_se = m.max_violation_se.max(rep.max_violation_se);
                let total = m.checkpoints.len() + rep.checkpoints.len();
                let passed = m.checkpoints.iter().chain(&rep.checkpoints).filter(|c| c.pass).count();
                m.pass_fraction = passed as f64 / total as f64;
                m.checkpoints.extend(rep.checkpoints);
                m
            }
        });
    }
    let mut report = merged.ok_or_else(|| Error::Config("bound.kinds is empty".into()))?;
    report.experiment = "bound".into();
    report.seed = cfg.ensemble.seed;
    report.details.remove("kind");
    report.detail("kinds", &b.kinds);
    report.config = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs an experiment and writes `<name>.json` and `<name>.csv` (checkpoint
/// curve) into the output directory.
pub fn cmd_verify(cfg: &RunConfig, name: &str) -> Result<VerificationReport> {
    let report = run_experiment(cfg, name)?;
    fs::write(out_file(cfg, &format!("{name}.json"))?, report.to_json()? + "\n")?;
    let mut f = fs::File::create(out_file(cfg, &format!("{name}.csv"))?)?;
    write_table_csv(&mut f, &["t", "empirical_mean", "se", "bound"], &report.curve_rows())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub config: String,
    pub experiment: String,
    pub pass: bool,
    pub error: Option<String>,
    pub summary: String,
}

/// Runs the experiment named in every config of `dir` (sorted by file
/// name). Each report goes to `<out>/<config stem>/`, the aggregate to
/// `<out>/suite.json`, with `<out>` from `--out` (default `out/suite`).
/// Failures and errors are recorded without stopping the suite.
pub fn cmd_suite(dir: &Path, overrides: &Overrides) -> Result<Vec<SuiteEntry>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml" || e == "json"))
        .collect();
    files.sort();
    let base = overrides.out.clone().unwrap_or_else(|| PathBuf::from("out/suite"));
    let mut entries = Vec::with_capacity(files.len());
    for file in files {
        let label = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let stem = file.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let outcome = RunConfig::load(&file).and_then(|mut cfg| {
            cfg.apply(overrides);
            cfg.output.dir = base.join(&stem);
            let name = cfg
                .experiment
                .as_ref()
                .map(|e| e.name.clone())
                .ok_or_else(|| Error::Config("missing [experiment] name".into()))?;
            let report = cmd_verify(&cfg, &name)?;
            Ok((name, report))
        });
        entries.push(match outcome {
            Ok((name, r)) => SuiteEntry { config: label, experiment: name, pass: r.pass, error: None, summary: r.summary() },
            Err(e) => SuiteEntry { config: label, experiment: String::new(), pass: false, error: Some(e.to_string()), summary: String::new() },
        });
    }
    fs::create_dir_all(&base)?;
    fs::write(base.join("suite.json"), to_json(&entries)? + "\n")?;
    Ok(entries)
}

#[derive(Debug, Parser)]
#[command(name = "pgf", version, about = "Simulate stochastic gradient methods and their diffusion models, evaluate rate bounds, and verify them by Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of Monte-Carlo paths (overrides the config).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Euler step of continuous models (overrides the config).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory (one path) or an ensemble.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a rate bound on a grid.
    Bound {
        #[arg(long)]
        config: PathBuf,
        /// Bound kind, e.g. PL_CT.
        #[arg(long)]
        kind: RateKind,
    },
    /// Run a named experiment; exit 0 on pass, 1 on fail, 2 on error.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Experiment name; defaults to `[experiment] name` in the config.
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Run every config in a directory and write an aggregate report.
    Suite {
        #[arg(long)]
        dir: PathBuf,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, paths: self.paths, dt: self.dt, out: self.out.clone(), format: self.format }
    }
}

fn load(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(o);
    Ok(cfg)
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let o = cli.overrides();
    let result: Result<i32> = match &cli.command {
        Command::Simulate { config } => load(config, &o).and_then(|c| cmd_simulate(&c)).map(|p| {
            println!("{}", p.display());
            0
        }),
        Command::Bound { config, kind } => load(config, &o).and_then(|c| cmd_bound(&c, *kind)).map(|p| {
            println!("{}", p.display());
            0
        }),
        Command::Verify { config, experiment } => load(config, &o).and_then(|c| {
            let name = match experiment {
                Some(n) => n.clone(),
                None => c.experiment.as_ref().map(|e| e.name.clone()).ok_or_else(|| {
                    Error::Config(format!("no experiment given; pass --experiment or set [experiment] name (one of {})", EXPERIMENTS.join(", ")))
                })?,
            };
            let report = cmd_verify(&c, &name)?;
            println!("{}", report.summary());
            Ok(if report.pass { 0 } else { 1 })
        }),
        Command::Suite { dir } => cmd_suite(dir, &o).map(|entries| {
            for e in &entries {
                match &e.error {
                    Some(err) => println!("{}: ERROR {err}", e.config),
                    None => println!("{} {}", e.config, e.summary),
                }
            }
            if entries.iter().any(|e| e.error.is_some()) {
                2
            } else if entries.iter().all(|e| e.pass) {
                0
            } else {
                1
            }
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        2
    })
}
