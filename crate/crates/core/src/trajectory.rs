//! Sample paths shared by the discrete algorithms and the integrators.

use serde::Serialize;

use crate::error::Result;
use crate::problems::FiniteSumProblem;
use crate::Vector;

/// Per-time observables of a state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Observation {
    pub f_gap: f64,
    pub grad_norm_sq: f64,
    pub dist_sq: f64,
}

impl Observation {
    pub fn of(problem: &FiniteSumProblem, x: &Vector) -> Result<Self> {
        Ok(Observation {
            f_gap: problem.gap(x)?,
            grad_norm_sq: problem.full_gradient(x)?.norm_squared(),
            dist_sq: (x - problem.x_star()).norm_squared(),
        })
    }

    pub fn get(&self, which: Observable) -> f64 {
        match which {
            Observable::FGap => self.f_gap,
            Observable::GradNormSq => self.grad_norm_sq,
            Observable::DistSq => self.dist_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    FGap,
    GradNormSq,
    DistSq,
}

/// Set on the record written right after an epoch-end resampling.
pub const FLAG_JUMP: u8 = 1;
/// Set on the last record of a path that left the finite range.
pub const FLAG_DIVERGED: u8 = 2;

/// Norm above which an iterate counts as divergent.
pub const DIVERGENCE_NORM: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOptions {
    /// Record every `stride`-th step (the final step is always recorded).
    pub stride: usize,
    pub keep_states: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions { stride: 1, keep_states: true }
    }
}

impl RecordOptions {
    pub fn thinned(stride: usize) -> Self {
        RecordOptions { stride: stride.max(1), keep_states: false }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Grid index (step number) of each record.
    pub steps: Vec<usize>,
    /// Empty when the run was recorded without states.
    pub states: Vec<Vector>,
    pub observables: Vec<Observation>,
    pub flags: Vec<u8>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, which: Observable) -> Vec<f64> {
        self.observables.iter().map(|o| o.get(which)).collect()
    }

    pub fn last_state(&self) -> Option<&Vector> {
        self.states.last()
    }

    /// Checks the structural invariants: strictly increasing times and
    /// matching lengths.
    pub fn is_consistent(&self) -> bool {
        let n = self.times.len();
        self.times.windows(2).all(|w| w[0] < w[1])
            && self.observables.len() == n
            && self.flags.len() == n
            && self.steps.len() == n
            && (self.states.is_empty() || self.states.len() == n)
    }
}

pub(crate) fn is_divergent(x: &Vector) -> bool {
    x.iter().any(|v| !v.is_finite()) || x.norm() > DIVERGENCE_NORM
}

/// Incremental builder used by the simulation loops.
pub(crate) struct Recorder<'a> {
    problem: &'a FiniteSumProblem,
    opts: RecordOptions,
    traj: Trajectory,
    pending_flags: u8,
}

impl<'a> Recorder<'a> {
    pub fn new(problem: &'a FiniteSumProblem, opts: RecordOptions) -> Self {
        Recorder {
            problem,
            opts: RecordOptions { stride: opts.stride.max(1), ..opts },
            traj: Trajectory::default(),
            pending_flags: 0,
        }
    }

    pub fn flag(&mut self, flag: u8) {
        self.pending_flags |= flag;
    }

    /// Records `x` at step `k` if it falls on the stride or `force` is set.
    pub fn record(&mut self, k: usize, t: f64, x: &Vector, force: bool) -> Result<()> {
        if !(force || k.is_multiple_of(self.opts.stride)) {
            return Ok(());
        }
        self.traj.times.push(t);
        self.traj.steps.push(k);
        let obs = if x.iter().all(|v| v.is_finite()) {
            Observation::of(self.problem, x)?
        } else {
            Observation { f_gap: f64::NAN, grad_norm_sq: f64::NAN, dist_sq: f64::NAN }
        };
        self.traj.observables.push(obs);
        self.traj.flags.push(self.pending_flags);
        self.pending_flags = 0;
        if self.opts.keep_states {
            self.traj.states.push(x.clone());
        }
        Ok(())
    }

    pub fn diverge(&mut self, k: usize, t: f64, x: &Vector) -> Result<()> {
        self.flag(FLAG_DIVERGED);
        self.traj.diverged = true;
        self.record(k, t, x, true)
    }

    pub fn finish(self) -> Trajectory {
        self.traj
    }
}
