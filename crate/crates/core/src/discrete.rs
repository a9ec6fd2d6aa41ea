//! The iterative algorithms: mini-batch SGD, its Gaussian surrogate PGD,
//! and SVRG with the Option II epoch-end resampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, precondition, Result};
use crate::estimators::{mb_estimate, sigma_mb, vr_estimate_anchored, VrAnchor};
use crate::problems::FiniteSumProblem;
use crate::schedules::{AdjustmentSchedule, BatchSchedule};
use crate::trajectory::{is_divergent, RecordOptions, Recorder, Trajectory, FLAG_JUMP};
use crate::Vector;

fn check_run(problem: &FiniteSumProblem, x0: &Vector, n_steps: usize, batch: &BatchSchedule) -> Result<()> {
    check_dim(problem.dim(), x0.len())?;
    batch.validate()?;
    if n_steps == 0 {
        return Err(precondition("n_steps must be at least 1"));
    }
    Ok(())
}

/// `x_{k+1} = x_k - h psi_k G_MB(x_k, b_k)`.
pub fn run_mb_sgd<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    adj: &AdjustmentSchedule,
    batch: &BatchSchedule,
    x0: &Vector,
    n_steps: usize,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    check_run(problem, x0, n_steps, batch)?;
    let h = adj.h();
    let mut rec = Recorder::new(problem, record);
    let mut x = x0.clone();
    for k in 0..n_steps {
        rec.record(k, h * k as f64, &x, false)?;
        let g = mb_estimate(problem, &x, batch.b_k(k, h), rng)?;
        x.axpy(-h * adj.psi_k(k), &g.value, 1.0);
        if is_divergent(&x) {
            rec.diverge(k + 1, h * (k + 1) as f64, &x)?;
            return Ok(rec.finish());
        }
    }
    rec.record(n_steps, h * n_steps as f64, &x, true)?;
    Ok(rec.finish())
}

/// Perturbed gradient descent: the gradient error of SGD replaced by
/// Gaussian noise with the same covariance,
/// `x_{k+1} = x_k - h psi_k grad f(x_k) - h psi_k b_k^{-1/2} sigma_MB(x_k) Z_k`.
pub fn run_pgd<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    adj: &AdjustmentSchedule,
    batch: &BatchSchedule,
    x0: &Vector,
    n_steps: usize,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    check_run(problem, x0, n_steps, batch)?;
    let h = adj.h();
    let d = problem.dim();
    let mut rec = Recorder::new(problem, record);
    let mut x = x0.clone();
    for k in 0..n_steps {
        rec.record(k, h * k as f64, &x, false)?;
        let eta = h * adj.psi_k(k);
        let g = problem.full_gradient(&x)?;
        let sqrt = sigma_mb(problem, &x)?.sqrt_matrix;
        let z = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let noise = sqrt * z;
        x.axpy(-eta, &g, 1.0);
        x.axpy(-eta / (batch.b_k(k, h) as f64).sqrt(), &noise, 1.0);
        if is_divergent(&x) {
            rec.diverge(k + 1, h * (k + 1) as f64, &x)?;
            return Ok(rec.finish());
        }
    }
    rec.record(n_steps, h * n_steps as f64, &x, true)?;
    Ok(rec.finish())
}

/// SVRG run together with the within-epoch offset chosen at each jump.
#[derive(Debug, Clone)]
pub struct SvrgRun {
    pub trajectory: Trajectory,
    /// For epoch `j`, the offset `i` in `0..m` such that the next epoch
    /// starts from `x_{jm + i}`.
    pub jump_offsets: Vec<usize>,
}

/// SVRG Option II with unit batch and constant stepsize.
///
/// During epoch `j` the pivot is `x_{jm}`; at the end of the epoch the
/// start of the next one is drawn uniformly from `x_{jm}, ..., x_{jm+m-1}`.
pub fn run_svrg_option2<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    h: f64,
    epoch_steps: usize,
    n_epochs: usize,
    x0: &Vector,
    record: RecordOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    Ok(run_svrg_option2_logged(problem, h, epoch_steps, n_epochs, x0, record, rng)?.trajectory)
}

pub fn run_svrg_option2_logged<R: Rng + ?Sized>(
    problem: &FiniteSumProblem,
    h: f64,
    epoch_steps: usize,
    n_epochs: usize,
    x0: &Vector,
    record: RecordOptions,
    rng: &mut R,
) -> Result<SvrgRun> {
    check_dim(problem.dim(), x0.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(precondition(format!("stepsize h must be positive, got {h}")));
    }
    if epoch_steps == 0 || n_epochs == 0 {
        return Err(precondition("epoch length and number of epochs must be at least 1"));
    }
    let m = epoch_steps;
    let mut rec = Recorder::new(problem, record);
    let mut jump_offsets = Vec::with_capacity(n_epochs);
    let mut x = x0.clone();
    let mut epoch_states: Vec<Vector> = Vec::with_capacity(m);
    for j in 0..n_epochs {
        let anchor = VrAnchor::new(problem, x.clone())?;
        epoch_states.clear();
        for i in 0..m {
            let k = j * m + i;
            rec.record(k, h * k as f64, &x, false)?;
            epoch_states.push(x.clone());
            let g = vr_estimate_anchored(problem, &x, &anchor, 1, rng)?;
            x.axpy(-h, &g.value, 1.0);
            if is_divergent(&x) {
                rec.diverge(k + 1, h * (k + 1) as f64, &x)?;
                return Ok(SvrgRun { trajectory: rec.finish(), jump_offsets });
            }
        }
        let pick = rng.random_range(0..m);
        jump_offsets.push(pick);
        x = epoch_states[pick].clone();
        rec.flag(FLAG_JUMP);
    }
    let k_end = n_epochs * m;
    rec.record(k_end, h * k_end as f64, &x, true)?;
    Ok(SvrgRun { trajectory: rec.finish(), jump_offsets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{isotropic_quadratic, make_perturbed_quadratic, rsi_mixture};
    use crate::rng::path_rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn deterministic_linear_recursion() {
        let p = isotropic_quadratic(1.0, 1).unwrap();
        let adj = AdjustmentSchedule::constant(0.1).unwrap();
        let batch = BatchSchedule::constant(1).unwrap();
        let tr = run_mb_sgd(&p, &adj, &batch, &v(&[1.0]), 50, RecordOptions::default(), &mut path_rng(0, 0)).unwrap();
        assert!(tr.is_consistent());
        for (k, x) in tr.states.iter().enumerate() {
            assert!((x[0] - 0.9f64.powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_noise_descent_is_monotone() {
        let p = make_perturbed_quadratic(&[0.5, 2.0], Vector::zeros(2), vec![Vector::zeros(2); 3]).unwrap();
        let adj = AdjustmentSchedule::power(0.5, 0.5).unwrap(); // h = 1/L
        let batch = BatchSchedule::constant(2).unwrap();
        let tr = run_mb_sgd(&p, &adj, &batch, &v(&[3.0, -1.0]), 200, RecordOptions::default(), &mut path_rng(0, 1))
            .unwrap();
        let f = tr.series(crate::trajectory::Observable::FGap);
        assert!(f.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pgd_without_noise_is_gradient_descent() {
        let p = make_perturbed_quadratic(&[0.5, 2.0], Vector::zeros(2), vec![Vector::zeros(2); 2]).unwrap();
        let adj = AdjustmentSchedule::power(0.1, 1.0).unwrap();
        let batch = BatchSchedule::constant(1).unwrap();
        let x0 = v(&[1.0, 1.0]);
        let a = run_pgd(&p, &adj, &batch, &x0, 100, RecordOptions::default(), &mut path_rng(1, 0)).unwrap();
        let b = run_mb_sgd(&p, &adj, &batch, &x0, 100, RecordOptions::default(), &mut path_rng(2, 0)).unwrap();
        for (xa, xb) in a.states.iter().zip(&b.states) {
            assert!((xa - xb).norm() < 1e-14);
        }
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let p = make_perturbed_quadratic(&[1.0, 2.0], Vector::zeros(2), vec![v(&[1.0, -1.0]), v(&[-1.0, 1.0])]).unwrap();
        let adj = AdjustmentSchedule::constant(0.1).unwrap();
        let batch = BatchSchedule::constant(1).unwrap();
        let x0 = v(&[1.0, 2.0]);
        let a = run_mb_sgd(&p, &adj, &batch, &x0, 300, RecordOptions::default(), &mut path_rng(5, 2)).unwrap();
        let b = run_mb_sgd(&p, &adj, &batch, &x0, 300, RecordOptions::default(), &mut path_rng(5, 2)).unwrap();
        assert_eq!(a.states, b.states);
        let s1 = run_svrg_option2(&rsi_mixture(&[2.0, 3.0], 0.5).unwrap(), 0.01, 10, 3, &x0, RecordOptions::default(), &mut path_rng(5, 3)).unwrap();
        let s2 = run_svrg_option2(&rsi_mixture(&[2.0, 3.0], 0.5).unwrap(), 0.01, 10, 3, &x0, RecordOptions::default(), &mut path_rng(5, 3)).unwrap();
        assert_eq!(s1.states, s2.states);
    }

    #[test]
    fn divergence_truncates_and_flags() {
        let p = isotropic_quadratic(1.0, 1).unwrap();
        let adj = AdjustmentSchedule::constant(3.0).unwrap(); // |1 - 3| = 2 per step
        let batch = BatchSchedule::constant(1).unwrap();
        let tr = run_mb_sgd(&p, &adj, &batch, &v(&[1.0]), 10_000, RecordOptions::default(), &mut path_rng(0, 0)).unwrap();
        assert!(tr.diverged);
        assert!(tr.len() < 10_000);
        assert_eq!(*tr.flags.last().unwrap() & crate::trajectory::FLAG_DIVERGED, crate::trajectory::FLAG_DIVERGED);
    }

    #[test]
    fn observables_recomputable() {
        let p = make_perturbed_quadratic(&[1.0, 3.0], v(&[1.0, -1.0]), vec![v(&[0.5, 0.5]), v(&[-0.5, -0.5])]).unwrap();
        let adj = AdjustmentSchedule::constant(0.1).unwrap();
        let batch = BatchSchedule::constant(1).unwrap();
        let tr = run_mb_sgd(&p, &adj, &batch, &v(&[2.0, 2.0]), 100, RecordOptions::default(), &mut path_rng(0, 4)).unwrap();
        for i in (0..tr.len()).step_by(10) {
            let o = crate::trajectory::Observation::of(&p, &tr.states[i]).unwrap();
            assert!((o.f_gap - tr.observables[i].f_gap).abs() <= 1e-12);
            assert!((o.dist_sq - tr.observables[i].dist_sq).abs() <= 1e-12);
        }
    }

    #[test]
    fn svrg_single_component_is_gd_with_rewinds() {
        let p = isotropic_quadratic(1.0, 1).unwrap();
        let run = run_svrg_option2_logged(&p, 0.1, 5, 4, &v(&[1.0]), RecordOptions::default(), &mut path_rng(0, 5)).unwrap();
        let tr = &run.trajectory;
        // Every epoch start equals 0.9^(number of gd steps actually kept).
        let mut kept = 0;
        for (j, off) in run.jump_offsets.iter().enumerate() {
            let start = tr.states[j * 5][0];
            assert!((start - 0.9f64.powi(kept)).abs() < 1e-14);
            kept += *off as i32;
        }
        assert_eq!(tr.flags.iter().filter(|f| **f & FLAG_JUMP != 0).count(), 4);
        assert!(tr.is_consistent());
    }

    #[test]
    fn zero_steps_rejected() {
        let p = isotropic_quadratic(1.0, 1).unwrap();
        let adj = AdjustmentSchedule::constant(0.1).unwrap();
        let batch = BatchSchedule::constant(1).unwrap();
        assert!(run_mb_sgd(&p, &adj, &batch, &v(&[1.0]), 0, RecordOptions::default(), &mut path_rng(0, 0)).is_err());
        assert!(run_svrg_option2(&p, 0.1, 0, 1, &v(&[1.0]), RecordOptions::default(), &mut path_rng(0, 0)).is_err());
    }
}
