//! Acceptance suite: nine end-to-end criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the lines always reach the terminal. Pass
//! criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 7`.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use pgf_core::bounds::{
    ball_limit, noise_integral, noise_integral_quadrature, pl_kernel_integral, pl_kernel_integral_quadrature,
    weighted_noise_integral, weighted_noise_integral_quadrature, BoundInputs, RateBound, RateKind,
};
use pgf_core::continuous::VolatilityMode;
use pgf_core::estimators::{mb_estimate, principal_sqrt, sigma_mb_matrix, sigma_vr_matrix, vr_estimate};
use pgf_core::harness::{
    ball_experiment, ensemble_run, exponent_experiment, landscape_stretch_experiment, svrg_contraction_experiment,
    time_change_experiment, verify_bound, weak_error_experiment, BallConfig, BallMode, ExponentConfig, LandscapeConfig,
    RunSpec, SvrgConfig, SvrgModel, TimeChangeConfig, VerificationReport, WeakErrorConfig,
};
use pgf_core::problems::{
    isotropic_quadratic, isotropic_with_noise, make_perturbed_quadratic, rsi_mixture, FiniteSumProblem, ProblemConstants,
};
use pgf_core::rng::path_rng;
use pgf_core::schedules::{AdjustmentSchedule, BatchSchedule};
use pgf_core::trajectory::RecordOptions;
use pgf_core::{Matrix, Vector};

type Outcome = Result<(bool, String), String>;

const SEED: u64 = 20_200_607;

fn report_line(r: &VerificationReport) -> String {
    format!(
        "{}/{} checkpoints, max violation {:.2} SE, {:.1}s",
        r.checkpoints.iter().filter(|c| c.pass).count(),
        r.checkpoints.len(),
        r.max_violation_se,
        r.runtime_secs
    )
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Tail level of the OU model against `h d sigma*^2 / 4`.
fn c1_ou_level() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for d in [2, 100] {
        let p = isotropic_with_noise(2.0, d, 0.1).map_err(err)?;
        let cfg = BallConfig {
            h: 1e-4,
            batch: 1,
            dt: 1e-4,
            horizon: 2.5,
            n_paths: 1000,
            seed: SEED,
            mode: BallMode::Continuous,
            x0_offset: 0.0,
            tail_fraction: 0.5,
            rel_tol: 0.1,
            slack_se: 3.0,
            stride: 10,
        };
        let r = ball_experiment(&p, &cfg).map_err(err)?;
        let expected = 1e-4 * d as f64 * 0.1 / 4.0;
        let tail = r.details["tail_mean"].as_f64().unwrap_or(f64::NAN);
        let rel = (tail - expected) / expected;
        ok &= rel.abs() <= 0.1 && r.pass;
        notes.push(format!("d={d}: tail {tail:.4e} vs {expected:.1e} ({:+.2}%)", 100.0 * rel));
    }
    Ok((ok, notes.join("; ")))
}

/// Law of the annealed flow at `tau(t)` against the warped flow at `t`.
fn c2_time_change() -> Outcome {
    let p = isotropic_quadratic(1.0, 1).map_err(err)?;
    let cfg = TimeChangeConfig {
        h: 1e-3,
        sigma: 5.0,
        a: 1.0,
        batch: 1.0,
        x0: 1.0,
        dt: 1e-3,
        horizon: 51f64.ln(),
        n_checkpoints: 30,
        n_paths: 100,
        seed: SEED,
        slack_se: 3.0,
        required_fraction: 0.95,
    };
    let r = time_change_experiment(&p, &cfg).map_err(err)?;
    Ok((r.pass, format!("{:.1}% of checks within 3 SE; {}", 100.0 * r.pass_fraction, report_line(&r))))
}

fn rsi_problem() -> Result<FiniteSumProblem, String> {
    let p = rsi_mixture(&[6.0, 6.0], 1.0).map_err(err)?;
    let mut c = p.constants().clone();
    c.mu_rsi = Some(10.0);
    c.l_variance = Some(1.0);
    p.with_constants(c).map_err(err)
}

/// Epoch-start distances of SVRG and its delay model against `rho^j`.
fn c3_svrg() -> Outcome {
    let p = rsi_problem()?;
    let mut ok = true;
    let mut notes = Vec::new();
    for model in [SvrgModel::Discrete, SvrgModel::Sdde { dt: 1e-3 }] {
        let cfg = SvrgConfig { h: 0.01, epoch_steps: 100, n_epochs: 5, x0: vec![1.0, -2.0], n_paths: 500, seed: SEED, model, slack_se: 3.0 };
        let r = svrg_contraction_experiment(&p, &cfg).map_err(err)?;
        ok &= r.pass && r.checkpoints.len() == 5;
        let rho = r.details["rho"].as_f64().unwrap_or(f64::NAN);
        let name = if matches!(model, SvrgModel::Discrete) { "discrete" } else { "sdde" };
        notes.push(format!("{name} rho={rho:.4} {}", report_line(&r)));
    }
    Ok((ok, notes.join("; ")))
}

fn perturbed_problem() -> Result<FiniteSumProblem, String> {
    let c = |a: f64, b: f64| Vector::from_column_slice(&[a, b]);
    make_perturbed_quadratic(&[1.0, 2.0], Vector::zeros(2), vec![c(1.0, 0.5), c(-1.0, -0.5), c(0.5, -1.0), c(-0.5, 1.0)])
        .map_err(err)
}

fn schedules(h: f64) -> Result<Vec<(&'static str, AdjustmentSchedule)>, String> {
    Ok(vec![("constant", AdjustmentSchedule::constant(h).map_err(err)?), ("power(0.5)", AdjustmentSchedule::power(h, 0.5).map_err(err)?)])
}

/// Discrete PL bound along MB-SGD.
fn c4_discrete_pl() -> Outcome {
    let p = perturbed_problem()?;
    let h = 0.5 / p.constants().l;
    let x0 = Vector::from_column_slice(&[2.0, 2.0]);
    let batch = BatchSchedule::constant(1).map_err(err)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, adj) in schedules(h)? {
        let run = RunSpec::Sgd { adj, batch, x0: x0.clone(), n_steps: 2000 };
        let stats = ensemble_run(&p, &run, RecordOptions::thinned(1), 500, SEED).map_err(err)?;
        let bound = RateBound::new(RateKind::PlDt, BoundInputs::from_problem(&p, adj, batch, &x0).map_err(err)?).map_err(err)?;
        let r = verify_bound(&stats, &bound, 3.0, None).map_err(err)?;
        ok &= r.pass;
        notes.push(format!("{name}: {}", report_line(&r)));
    }
    Ok((ok, notes.join("; ")))
}

/// Flow bounds: gradient norm at a randomized time, both WQC variants, PL.
fn c5_continuous() -> Outcome {
    let p = perturbed_problem()?;
    let h = 0.5 / p.constants().l;
    let x0 = Vector::from_column_slice(&[2.0, 2.0]);
    let batch = BatchSchedule::constant(1).map_err(err)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, adj) in schedules(h)? {
        let run = RunSpec::MbPgf { adj, batch, x0: x0.clone(), dt: h / 5.0, horizon: 50.0, volatility: VolatilityMode::Exact };
        let stats = ensemble_run(&p, &run, RecordOptions::thinned(1), 500, SEED).map_err(err)?;
        let inputs = BoundInputs::from_problem(&p, adj, batch, &x0).map_err(err)?;
        for kind in [RateKind::SmoothCt, RateKind::WqcW1, RateKind::WqcW2, RateKind::PlCt] {
            let r = verify_bound(&stats, &RateBound::new(kind, inputs.clone()).map_err(err)?, 3.0, None).map_err(err)?;
            ok &= r.pass;
            notes.push(format!("{name} {kind} {}", if r.pass { "ok" } else { "VIOLATED" }));
        }
    }
    Ok((ok, notes.join(", ")))
}

/// Late-time decay exponent of PL suboptimality under `psi = (1+t)^{-a}`.
fn c6_exponents() -> Outcome {
    let p = isotropic_with_noise(1.0, 2, 1.0).map_err(err)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [0.3, 0.5, 0.8] {
        let cfg = ExponentConfig {
            h: 0.5,
            a,
            batch: 1,
            x0: vec![1.0, 1.0],
            n_steps: 100_000,
            n_paths: 200,
            seed: SEED,
            stride: 100,
            fit_span: 10.0,
            tolerance: 0.15,
        };
        let r = exponent_experiment(&p, &cfg).map_err(err)?;
        ok &= r.pass;
        notes.push(format!("a={a}: slope {:.3}", r.details["slope"].as_f64().unwrap_or(f64::NAN)));
    }
    Ok((ok, notes.join("; ")))
}

/// Noiseless flow under `psi = 1/(1+t)` against the stretched closed form.
fn c7_landscape() -> Outcome {
    let cfg = LandscapeConfig {
        lambda: vec![1.0, 2.0, -0.5],
        x0: vec![1.0, 1.0, 1.0],
        dt: 1e-4,
        horizon: 10.0,
        sigma: 0.0,
        h: 1e-2,
        n_paths: 1,
        seed: SEED,
        slack_se: 3.0,
        ode_tolerance_factor: 5.0,
        slope_tolerance: 0.02,
        n_records: 200,
    };
    let r = landscape_stretch_experiment(&cfg).map_err(err)?;
    let worst = r.checkpoints.iter().map(|c| (c.empirical - c.reference).abs()).fold(0.0, f64::max);
    let slope = r.details["growth_slope[2]"].as_f64().unwrap_or(f64::NAN);
    Ok((r.pass, format!("max error {worst:.2e} (tol {:.2e}), saddle slope {slope:.4}", r.details["tolerance"].as_f64().unwrap_or(f64::NAN))))
}

/// First-order weak error of MB-SGD against the flow mean.
fn c8_weak_error() -> Outcome {
    let p = isotropic_with_noise(1.0, 2, 0.1).map_err(err)?;
    let cfg = WeakErrorConfig {
        h_list: vec![0.02, 0.01, 0.005],
        horizon: 1.0,
        x0: vec![10.0, 10.0],
        batch: 1,
        n_paths: 10_000,
        seed: SEED,
        slope_range: (0.7, 1.3),
        ratio_range: (1.6, 2.4),
    };
    let r = weak_error_experiment(&p, &cfg).map_err(err)?;
    let ratios: Vec<String> = r.checkpoints.iter().filter(|c| c.label.starts_with("ratio")).map(|c| format!("{:.3}", c.empirical)).collect();
    Ok((r.pass, format!("ratios [{}], slope {:.3}", ratios.join(", "), r.details["slope"].as_f64().unwrap_or(f64::NAN))))
}

/// Simulation-free properties.
fn c9_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = path_rng(SEED, 9);

    // Unbiasedness of both estimators, 1/b covariance scaling.
    let p = perturbed_problem()?;
    let x = Vector::from_column_slice(&[0.7, -1.3]);
    let g = p.full_gradient(&x).map_err(err)?;
    let pivot = Vector::from_column_slice(&[-0.4, 0.9]);
    let draws = 100_000;
    for b in [1usize, 2, 4, 8] {
        let mut mean = Vector::zeros(2);
        let mut second = Matrix::zeros(2, 2);
        for _ in 0..draws {
            let e = mb_estimate(&p, &x, b, &mut rng).map_err(err)?.value - &g;
            mean += &e;
            second += &e * e.transpose();
        }
        mean /= draws as f64;
        let cov = second / draws as f64 - &mean * mean.transpose();
        let target = sigma_mb_matrix(&p, &x).map_err(err)? / b as f64;
        let se = (target.diagonal() / draws as f64).map(f64::sqrt);
        if mean.iter().zip(se.iter()).any(|(m, s)| m.abs() > 4.0 * s) {
            failures.push(format!("mb mean b={b}"));
        }
        let rel = (&cov - &target).norm() / target.norm();
        if rel > 0.03 {
            failures.push(format!("mb covariance b={b} rel {rel:.3}"));
        }
    }
    let rp = rsi_problem()?;
    let xr = Vector::from_column_slice(&[0.7, -1.3]);
    let gr = rp.full_gradient(&xr).map_err(err)?;
    let target = sigma_vr_matrix(&rp, &xr, &pivot).map_err(err)?;
    let mut mean = Vector::zeros(2);
    for _ in 0..draws {
        mean += vr_estimate(&rp, &xr, &pivot, 1, &mut rng).map_err(err)?.value - &gr;
    }
    mean /= draws as f64;
    let se = (target.diagonal() / draws as f64).map(f64::sqrt);
    if mean.iter().zip(se.iter()).any(|(m, s)| m.abs() > 4.0 * s) {
        failures.push("vr mean".into());
    }

    // Principal square root round trip on random M M^T.
    for _ in 0..20 {
        let m = Matrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let a = &m * m.transpose();
        let s = principal_sqrt(&a).map_err(err)?;
        if (&s * &s - &a).norm() > 1e-9 {
            failures.push("principal_sqrt".into());
        }
    }

    // phi / tau inversion.
    for adj in [AdjustmentSchedule::constant(0.1), AdjustmentSchedule::power(0.1, 0.5), AdjustmentSchedule::power(0.1, 1.0)] {
        let adj = adj.map_err(err)?;
        for t in [0.0, 1e-3, 0.5, 3.0, 40.0, 1e4] {
            let back = adj.phi_inverse(adj.phi(t).map_err(err)?).map_err(err)?;
            if (back - t).abs() > 1e-10 * t.max(1.0) {
                failures.push(format!("tau(phi({t}))"));
            }
        }
    }

    // Quadrature against closed forms.
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    for adj in [AdjustmentSchedule::constant(0.1), AdjustmentSchedule::power(0.1, 0.5), AdjustmentSchedule::power(0.1, 1.0)] {
        let adj = adj.map_err(err)?;
        let batch = BatchSchedule::constant(2).map_err(err)?;
        for t in [0.5, 5.0, 100.0] {
            let pairs = [
                (noise_integral(&adj, &batch, t), noise_integral_quadrature(&adj, &batch, t)),
                (weighted_noise_integral(&adj, &batch, 0.3, t), weighted_noise_integral_quadrature(&adj, &batch, 0.3, t)),
                (pl_kernel_integral(&adj, &batch, 1.5, t), pl_kernel_integral_quadrature(&adj, &batch, 1.5, t)),
            ];
            for (closed, quad) in pairs {
                if rel(quad, closed) > 1e-8 {
                    failures.push(format!("quadrature t={t}: {closed} vs {quad}"));
                }
            }
        }
    }

    // Trace of the variance-reduced covariance at random point pairs.
    let l = rp.constants().l;
    for _ in 0..100 {
        let x = Vector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let y = Vector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let tr = sigma_vr_matrix(&rp, &x, &y).map_err(err)?.trace();
        let cap = 2.0 * l * l * ((&x - rp.x_star()).norm_squared() + (&y - rp.x_star()).norm_squared());
        if tr > cap * (1.0 + 1e-12) {
            failures.push("sigma_vr trace".into());
        }
    }

    // Discrete ball is twice the continuous one when L = mu.
    let iso = isotropic_with_noise(2.0, 3, 0.1).map_err(err)?;
    let c = ProblemConstants { l: 2.0, mu_pl: Some(2.0), ..iso.constants().clone() };
    let iso = iso.with_constants(c).map_err(err)?;
    let inputs =
        BoundInputs::from_problem(&iso, AdjustmentSchedule::constant(0.05).map_err(err)?, BatchSchedule::constant(2).map_err(err)?, &Vector::zeros(3))
            .map_err(err)?;
    let ratio = ball_limit(&inputs, RateKind::PlDt).map_err(err)? / ball_limit(&inputs, RateKind::PlCt).map_err(err)?;
    if (ratio - 2.0).abs() > 1e-12 {
        failures.push(format!("ball ratio {ratio}"));
    }

    let ok = failures.is_empty();
    Ok((ok, if ok { "estimators, sqrt, phi/tau, quadrature, trace bound, ball ratio".into() } else { failures.join(", ") }))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("OU stationary level", c1_ou_level),
        ("time change", c2_time_change),
        ("SVRG contraction", c3_svrg),
        ("discrete PL bound", c4_discrete_pl),
        ("continuous bounds", c5_continuous),
        ("asymptotic exponents", c6_exponents),
        ("landscape stretching", c7_landscape),
        ("weak error order", c8_weak_error),
        ("property suites", c9_properties),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!(
            "criterion {n} [{name}]: {} ({:.1}s) {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
