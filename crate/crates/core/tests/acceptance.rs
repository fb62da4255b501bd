//! Acceptance criteria, one pass/fail line each. Exits nonzero if any fails.
//!
//! Run with `cargo test --release --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use fins_core::contraction::{contraction_experiment, ContractionConfig};
use fins_core::diagnostics::Monitor;
use fins_core::flow::{auto_substeps, holder_gradient_norm, integrate_flow, invert_flow, matrix_linf, Direction, VelocitySeries};
use fins_core::interp::Interpolant;
use fins_core::patch::{
    advect_contour, advect_contour_with, c1gamma_envelope, c1gamma_seminorm, fit_ellipse, init_contour, rasterize_patch, Shape,
};
use fins_core::sample;
use fins_core::solver::{picard_iterate, step_inhomogeneous, SimState, SolverOptions};
use fins_core::verify::{self, Check};
use fins_core::{FractionalParams, Grid2D, Result, ScalarField, Symbol};

const SEED: u64 = 20;

struct Outcome {
    checks: Vec<Check>,
    seconds: f64,
}

fn timed(f: impl FnOnce() -> Result<Vec<Check>>) -> Outcome {
    let start = Instant::now();
    let checks = f().unwrap_or_else(|e| vec![Check::at_most(format!("error: {e}"), f64::INFINITY, 0.0)]);
    Outcome {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn params() -> FractionalParams {
    FractionalParams::for_solver(0.75, 1.0).unwrap()
}

fn heat() -> Result<Vec<Check>> {
    let start = Instant::now();
    let check = verify::heat_exactness(64, Symbol::Fractional)?;
    let secs = start.elapsed().as_secs_f64();
    let factor = (-0.1 * 5f64.powf(1.5)).exp();
    Ok(vec![
        check,
        // the exponent is quoted to seven digits; its decimal value 0.326976 is not e^{-1.118034}
        Check::at_most("decay factor vs e^{-1.118034}", (factor / (-1.118034f64).exp() - 1.0).abs(), 1e-7),
        Check::at_most("runtime at N = 64 [s]", secs, 1.0),
    ])
}

fn kernel() -> Result<Vec<Check>> {
    let mut v = verify::kernel_closed_form()?;
    v.extend(verify::kernel_decay()?.into_iter().map(|(_, _, c)| c));
    Ok(v)
}

fn pv() -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut v = verify::pv_vs_spectral(128, 0.75, SEED)?;
    v.push(Check::at_most("runtime at N = 128 [s]", start.elapsed().as_secs_f64(), 300.0));
    Ok(v)
}

fn energy_balance() -> Result<Vec<Check>> {
    let g = Grid2D::new(128, 2.0 * PI)?;
    let u0 = sample::divergence_free(&g, 1.0, 4.0, 0.5, &mut sample::rng(SEED));
    let mut s = SimState::new(ScalarField::constant(&g, 1.0), &u0, params(), SolverOptions::default())?;
    let mut m = Monitor::new(&s, 2.0)?;
    m.monitor_step(&s, &s.perturbation()?, None)?;
    for _ in 0..1000 {
        s = step_inhomogeneous(&s, 1e-3)?;
        m.monitor_step(&s, &s.perturbation()?, None)?;
    }
    let worst = m.records.iter().map(|r| r.balance_defect.abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("relative balance defect at T = 1", m.records.last().unwrap().balance_defect.abs(), 1e-6),
        Check::at_most("worst relative balance defect on [0, 1]", worst, 1e-6),
    ])
}

fn max_principle() -> Result<Vec<Check>> {
    let g = Grid2D::new(64, 2.0 * PI)?;
    let c = init_contour(
        Shape::Disk {
            center: (PI, PI),
            radius: 1.2,
        },
        256,
        0.05,
        0.5,
    )?;
    let u0 = sample::divergence_free(&g, 1.0, 4.0, 0.5, &mut sample::rng(SEED));
    let opts = SolverOptions {
        interpolant: Interpolant::BilinearClamped,
        ..SolverOptions::default()
    };
    let mut s = SimState::new(rasterize_patch(&c, &g), &u0, params(), opts)?;
    let mut prev = s.rho.map(|r| r - 1.0).max_abs();
    let mut growth = 0.0f64;
    for _ in 0..1000 {
        s = step_inhomogeneous(&s, 1e-3)?;
        let d = s.rho.map(|r| r - 1.0).max_abs();
        growth = growth.max(d - prev);
        prev = d;
    }
    Ok(vec![Check::at_most("largest one-step growth of ||rho - 1||_inf over 1000 steps", growth, 0.0)])
}

fn scaling() -> Result<Vec<Check>> {
    let (residual, control, _) = verify::scaling_invariance(64, Symbol::Fractional, SEED)?;
    Ok(vec![residual, control])
}

fn besov() -> Result<Vec<Check>> {
    Ok(verify::besov_equivalences(64, 20, SEED)?.0)
}

fn picard() -> Result<Vec<Check>> {
    let g = Grid2D::new(32, 2.0 * PI)?;
    let u0 = sample::divergence_free(&g, 1.0, 3.0, 0.5, &mut sample::rng(SEED));
    let a = sample::band_limited(&g, 1.0, 2.0, 0.0, &mut sample::rng(SEED + 1));
    // band_limited is normalized to unit sup norm
    let s0 = SimState::new(a.map(|v| 1.0 + 0.01 * v), &u0, params(), SolverOptions::default())?;
    let (dt, steps) = (0.01, 10);
    let run = |h: f64, k: usize| -> Result<SimState> {
        let mut s = s0.clone();
        for _ in 0..k {
            s = step_inhomogeneous(&s, h)?;
        }
        Ok(s)
    };
    let coarse = run(dt, steps)?;
    let fine = run(dt / 2.0, 2 * steps)?;
    let mut s = s0.clone();
    let mut ratio = 0.0f64;
    for _ in 0..steps {
        let (next, rep) = picard_iterate(&s, dt, 50, 1e-12)?;
        ratio = ratio.max(rep.max_ratio());
        s = next;
    }
    let disc = coarse.u.sub(&fine.u)?.l2_norm();
    let gap = s.u.sub(&coarse.u)?.l2_norm();
    Ok(vec![
        Check::at_most("largest successive-iterate ratio", ratio, 0.5),
        Check::at_most("Picard vs stepper gap / dt-halving error at t = 0.1", gap / disc, 2.0),
    ])
}

fn patch() -> Result<Vec<Check>> {
    let disk = init_contour(
        Shape::Disk {
            center: (0.0, 0.0),
            radius: 1.0,
        },
        128,
        0.05,
        1.0,
    )?;
    let turned = advect_contour_with(&disk, |_, x, y| (-y, x), 0.0, 2.0 * PI, 600)?;
    let drift = (turned.area() - disk.area()).abs();

    let shear_disk = init_contour(
        Shape::Disk {
            center: (0.0, 0.0),
            radius: 1.0,
        },
        256,
        0.05,
        1.0,
    )?;
    let sheared = advect_contour_with(&shear_disk, |_, _, y| (y, 0.0), 0.0, 1.0, 10)?;
    let (major, minor, _) = fit_ellipse(&sheared)?;
    // singular values of [[1, 1], [0, 1]]
    let root = 1.25f64.sqrt();
    let axis_err = (major - (1.5 + root).sqrt()).abs().max((minor - (1.5 - root).sqrt()).abs());

    let g = Grid2D::new(64, 2.0 * PI)?;
    let gamma = 0.5;
    let mut c = init_contour(
        Shape::Ellipse {
            center: (PI, PI),
            a: 1.2,
            b: 0.8,
        },
        256,
        0.05,
        gamma,
    )?;
    let initial = c1gamma_seminorm(&c, gamma)?;
    let u0 = sample::divergence_free(&g, 1.0, 3.0, 1.0, &mut sample::rng(SEED));
    let opts = SolverOptions {
        interpolant: Interpolant::BilinearClamped,
        ..SolverOptions::default()
    };
    let mut s = SimState::new(rasterize_patch(&c, &g), &u0, params(), opts)?;
    let (mut times, mut fields) = (vec![0.0], vec![s.u.clone()]);
    for _ in 0..100 {
        let next = step_inhomogeneous(&s, 0.01)?;
        let step = VelocitySeries::new(vec![s.t, next.t], vec![s.u.clone(), next.u.clone()])?;
        c = advect_contour(&c, &step, s.t, next.t)?;
        s = next;
        times.push(s.t);
        fields.push(s.u.clone());
    }
    let series = VelocitySeries::new(times, fields)?;
    let fm = integrate_flow(&series, 0.0, s.t, auto_substeps(&series, 0.0, s.t))?;
    let fm = invert_flow(&fm, &series)?;
    let grad = matrix_linf(&fm.gradient).max(matrix_linf(fm.inverse_gradient.as_ref().unwrap()));
    let holder = holder_gradient_norm(&fm, gamma, Direction::Forward)?;
    let envelope = c1gamma_envelope(initial, grad, holder, gamma);
    let last = c1gamma_seminorm(&c, gamma)?;
    Ok(vec![
        Check::at_most("rotating disk area drift", drift, 1e-10),
        Check::at_most("sheared disk ellipse axes error", axis_err, 1e-4),
        Check::at_most("C^{1,gamma} seminorm / Gronwall envelope at T = 1", last / envelope, 1.0),
    ])
}

fn contraction() -> Result<Vec<Check>> {
    let g = Grid2D::new(32, 2.0 * PI)?;
    let u = sample::divergence_free(&g, 1.0, 3.0, 0.5, &mut sample::rng(SEED));
    let a = sample::band_limited(&g, 1.0, 2.0, 0.0, &mut sample::rng(SEED + 1));
    let r1 = a.map(|v| 1.0 + 0.02 * v);
    let r2 = a.map(|v| 1.0 + 0.021 * v);
    let cfg = ContractionConfig {
        dt: 4e-3,
        ..ContractionConfig::default()
    };
    let same = contraction_experiment((&r1, &u), (&r1, &u), params(), &cfg)?;
    let worst_same = same.rows.iter().map(|r| r.delta_e.max(r.rhs())).fold(0.0, f64::max);
    let other = contraction_experiment((&r1, &u), (&r2, &u), params(), &cfg)?;
    let first = other.rows.first().unwrap().delta_e;
    let last = other.rows.last().unwrap().delta_e;
    Ok(vec![
        Check::at_most("identical runs: largest delta E and right-hand side", worst_same, 0.0),
        Check::at_least("distinct data: delta E at shortest / longest window", first / last, 0.1),
    ])
}

fn main() {
    let criteria: [(&str, fn() -> Result<Vec<Check>>); 12] = [
        ("fractional heat exactness", heat),
        ("kernel closed form and decay", kernel),
        ("gamma-constant identity", || Ok(vec![verify::gamma_constant_identity(20, SEED)])),
        ("principal value vs spectral", pv),
        ("Lagrangian norm identity", || verify::lagrangian_identity(64, 3, SEED)),
        ("energy balance", energy_balance),
        ("density maximum principle", max_principle),
        ("scaling invariance", scaling),
        ("Besov equivalences", besov),
        ("Picard contraction", picard),
        ("patch geometry", patch),
        ("contraction experiment", contraction),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let out = timed(f);
        let ok = out.checks.iter().all(|c| c.passed);
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name} ({:.1}s)", if ok { "PASS" } else { "FAIL" }, i + 1, out.seconds);
        for c in &out.checks {
            println!("       {c}");
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
