//! Subcommand drivers. Every artifact is a pure function of the configuration,
//! so repeated invocations produce byte-identical output directories.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fins_core::diagnostics::{estimate_report, write_csv, Monitor};
use fins_core::flow::VelocitySeries;
use fins_core::interp::Interpolant;
use fins_core::patch::{advect_contour, c1gamma_seminorm, init_contour, rasterize_patch, PatchContour, Shape};
use fins_core::sample;
use fins_core::scaling::{scaling_residual, ScalingReport};
use fins_core::snapshot::Snapshot;
use fins_core::solver::{step_inhomogeneous, SimState, SolverOptions};
use fins_core::spectral::cosine_mode;
use fins_core::verify::{run_suite, Suite, SuiteReport, VerifyOptions};
use fins_core::{FractionalParams, Grid2D, ScalarField, Symbol, VectorField2};

use crate::config::{DensityInit, PatchShape, RunConfig, VelocityInit};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Core(#[from] fins_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub type RunResult<T> = std::result::Result<T, RunError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> RunResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn value_error(key: &str, msg: impl Into<String>) -> RunError {
    RunError::Config(crate::config::ConfigError::Value {
        key: key.into(),
        msg: msg.into(),
    })
}

pub fn patch_shape(cfg: &RunConfig) -> Shape {
    let p = &cfg.patch;
    match p.shape {
        PatchShape::Disk => Shape::Disk {
            center: p.center,
            radius: p.radius,
        },
        PatchShape::Ellipse => Shape::Ellipse {
            center: p.center,
            a: p.axes.0,
            b: p.axes.1,
        },
        PatchShape::Polygon => Shape::SmoothedPolygon {
            center: p.center,
            radius: p.radius,
            k: p.lobes,
            delta: p.delta,
        },
    }
}

fn initial_velocity(cfg: &RunConfig, grid: &Grid2D) -> RunResult<VectorField2> {
    Ok(match &cfg.velocity {
        VelocityInit::Random { amplitude, modes } => {
            sample::divergence_free(grid, modes.0, modes.1, *amplitude, &mut sample::rng(cfg.seed))
        }
        VelocityInit::SingleMode { amplitude, mode } => {
            let (m1, m2) = (mode.0 as f64, mode.1 as f64);
            let norm = m1.hypot(m2);
            let c = cosine_mode(grid, mode.0, mode.1);
            VectorField2::new(c.scale(-amplitude * m2 / norm), c.scale(amplitude * m1 / norm))?
        }
        VelocityInit::Zero => VectorField2::zeros(grid),
        VelocityInit::Snapshot(path) => {
            let snap = Snapshot::read(path)?;
            let g = snap.grid()?;
            if g != *grid {
                return Err(value_error(
                    "snapshot_path",
                    format!("snapshot grid n = {}, L = {} differs from the configured grid", snap.n, snap.box_length),
                ));
            }
            VectorField2::new(snap.field("u1")?, snap.field("u2")?)?
        }
    })
}

/// Initial density, and the contour when the density is a patch.
fn initial_density(cfg: &RunConfig, grid: &Grid2D) -> RunResult<(ScalarField, Option<PatchContour>)> {
    Ok(match &cfg.density {
        DensityInit::Uniform => (ScalarField::constant(grid, 1.0), None),
        DensityInit::Bump { amplitude, width } => {
            let b = sample::gaussian_bump(grid, cfg.patch.center, *width);
            (b.map(|v| 1.0 + amplitude * v), None)
        }
        DensityInit::Random { amplitude, modes } => {
            let f = sample::band_limited(grid, modes.0, modes.1, 0.0, &mut sample::rng(cfg.seed.wrapping_add(1)));
            (f.map(|v| 1.0 + amplitude * v), None)
        }
        DensityInit::Patch => {
            let c = init_contour(patch_shape(cfg), cfg.patch.markers, cfg.patch.sigma, cfg.gamma)?;
            (rasterize_patch(&c, grid), Some(c))
        }
    })
}

pub fn solver_params(cfg: &RunConfig, symbol: Symbol) -> RunResult<FractionalParams> {
    Ok(FractionalParams::for_solver(cfg.alpha, cfg.nu)?.with_symbol(symbol))
}

/// Initial solver state and patch contour described by `cfg`.
pub fn initial_state(cfg: &RunConfig, symbol: Symbol) -> RunResult<(SimState, Option<PatchContour>)> {
    let grid = Grid2D::new(cfg.n, cfg.box_length)?;
    let u0 = initial_velocity(cfg, &grid)?;
    let (rho0, contour) = initial_density(cfg, &grid)?;
    let dev = rho0.map(|r| r - 1.0).max_abs();
    if dev > cfg.max_density_deviation {
        return Err(value_error(
            "max_density_deviation",
            format!("initial ||rho - 1||_inf = {dev:.4e} exceeds {}", cfg.max_density_deviation),
        ));
    }
    let options = SolverOptions {
        interpolant: cfg.interpolant,
        ..SolverOptions::default()
    };
    let state = SimState::new(rho0, &u0, solver_params(cfg, symbol)?, options)?;
    Ok((state, contour))
}

#[derive(Clone, Debug)]
pub struct SimulationSummary {
    pub steps: usize,
    pub t_final: f64,
    pub warnings: usize,
    pub patch_area_drift: Option<f64>,
    pub text: String,
}

fn write_contour(dir: &Path, step: usize, c: &PatchContour) -> RunResult<()> {
    let path = dir.join(format!("contour_{step:06}.csv"));
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    c.write_csv(&mut BufWriter::new(f))?;
    Ok(())
}

fn write_snapshot(dir: &Path, step: usize, s: &SimState) -> RunResult<()> {
    Snapshot::from_state(s)?.write(&dir.join(format!("snapshot_{step:06}.fins")))?;
    Ok(())
}

/// Run the configured simulation, writing into `out`:
/// `snapshot_NNNNNN.fins` at the snapshot cadence (and always at the first and
/// last step), `contour_NNNNNN.csv` alongside for patch runs, `diagnostics.csv`,
/// `config.txt` and `summary.txt`. With `t_final = 0` only the initial snapshot
/// and the summary are written.
pub fn simulate(cfg: &RunConfig, out: &Path, symbol: Symbol) -> RunResult<SimulationSummary> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let (mut state, mut contour) = initial_state(cfg, symbol)?;
    let steps = cfg.steps();
    write_snapshot(out, 0, &state)?;
    let mut text = String::new();
    let gamma_cap = cfg.admissible_gamma();
    if cfg.density == DensityInit::Patch && cfg.gamma > gamma_cap {
        // reported, not enforced
        writeln!(text, "note: gamma = {} exceeds 2 alpha - 1 + s - 2/p = {gamma_cap:.4}", cfg.gamma).unwrap();
    }
    if steps == 0 {
        writeln!(text, "steps = 0\nt_final = 0").unwrap();
        write_text(&out.join("summary.txt"), &text)?;
        return Ok(SimulationSummary {
            steps: 0,
            t_final: 0.0,
            warnings: 0,
            patch_area_drift: None,
            text,
        });
    }
    // the output location is not part of the run
    let echoed: String = cfg.to_text().lines().filter(|l| !l.starts_with("out_dir ")).map(|l| format!("{l}\n")).collect();
    write_text(&out.join("config.txt"), &echoed)?;
    if let Some(c) = &contour {
        write_contour(out, 0, c)?;
    }
    let area0 = contour.as_ref().map(|c| c.area());
    let c1g0 = match &contour {
        Some(c) => Some(c1gamma_seminorm(c, cfg.gamma)?),
        None => None,
    };
    let mut monitor = Monitor::new(&state, cfg.lebesgue_p)?;
    monitor.monitor_step(&state, &state.perturbation()?, contour.as_ref())?;
    let mut keep = vec![0usize];
    for step in 1..=steps {
        let next = step_inhomogeneous(&state, cfg.dt)?;
        if let Some(c) = &contour {
            let series = VelocitySeries::new(vec![state.t, next.t], vec![state.u.clone(), next.u.clone()])?;
            contour = Some(advect_contour(c, &series, state.t, next.t)?);
        }
        state = next;
        monitor.monitor_step(&state, &state.perturbation()?, contour.as_ref())?;
        if step % cfg.diag_every == 0 || step == steps {
            keep.push(step);
        }
        let snap_due = (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0) || step == steps;
        if snap_due {
            write_snapshot(out, step, &state)?;
            if let Some(c) = &contour {
                write_contour(out, step, c)?;
            }
        }
    }
    let rows: Vec<_> = keep.iter().map(|&i| monitor.records[i].clone()).collect();
    write_csv(&out.join("diagnostics.csv"), &rows)?;

    let last = monitor.records.last().unwrap();
    let first = &monitor.records[0];
    writeln!(text, "steps = {steps}").unwrap();
    writeln!(text, "t_final = {:?}", state.t).unwrap();
    writeln!(text, "energy_initial = {:.12e}", first.energy_l2).unwrap();
    writeln!(text, "energy_final = {:.12e}", last.energy_l2).unwrap();
    writeln!(text, "dissipation = {:.12e}", last.dissipation_cum).unwrap();
    writeln!(text, "balance_defect = {:.6e}", last.balance_defect).unwrap();
    writeln!(text, "rho_dev_linf_initial = {:.12e}", first.rho_dev_linf).unwrap();
    writeln!(text, "rho_dev_linf_final = {:.12e}", last.rho_dev_linf).unwrap();
    writeln!(text, "max_pressure_iterations = {}", monitor.records.iter().map(|r| r.pressure_iters).max().unwrap()).unwrap();
    let mut drift = None;
    if let (Some(c), Some(a0), Some(s0)) = (&contour, area0, c1g0) {
        let d = (c.area() - a0).abs() / a0;
        drift = Some(d);
        writeln!(text, "patch_area_drift = {d:.6e}").unwrap();
        writeln!(text, "patch_c1gamma_initial = {s0:.6e}").unwrap();
        writeln!(text, "patch_c1gamma_final = {:.6e}", c1gamma_seminorm(c, cfg.gamma)?).unwrap();
        writeln!(text, "patch_remeshes = {}", c.remeshes).unwrap();
    }
    writeln!(text, "warnings = {}", monitor.warnings.len()).unwrap();
    let mut checks: Vec<&str> = monitor.warnings.iter().map(|w| w.check).collect();
    checks.sort();
    checks.dedup();
    for check in checks {
        let hits: Vec<_> = monitor.warnings.iter().filter(|w| w.check == check).collect();
        let worst = hits.iter().map(|w| w.value).fold(0.0, f64::max);
        writeln!(text, "{} (first of {} steps; worst {worst:.3e})", hits[0], hits.len()).unwrap();
    }
    let report = estimate_report(&monitor.records, &monitor.norms, 0.05)?;
    text.push('\n');
    text.push_str(&report.to_table());
    write_text(&out.join("summary.txt"), &text)?;
    Ok(SimulationSummary {
        steps,
        t_final: state.t,
        warnings: monitor.warnings.len(),
        patch_area_drift: drift,
        text,
    })
}

/// Relative patch-area drift allowed by `patch-demo`.
pub const PATCH_AREA_TOL: f64 = 1e-4;

/// `cfg` with the density forced to a patch transported by the clamped
/// interpolant; every other key, including the patch keys, is honoured.
pub fn patch_demo(cfg: &RunConfig, out: &Path, symbol: Symbol) -> RunResult<(SimulationSummary, bool)> {
    let mut c = cfg.clone();
    c.density = DensityInit::Patch;
    c.interpolant = Interpolant::BilinearClamped;
    c.validate()?;
    let s = simulate(&c, out, symbol)?;
    let ok = s.patch_area_drift.map_or(true, |d| d <= PATCH_AREA_TOL);
    Ok((s, ok))
}

/// `lambda = 2` rescaling of the configured data over the configured steps.
pub fn scaling_check(cfg: &RunConfig, symbol: Symbol) -> RunResult<ScalingReport> {
    let (state, _) = initial_state(cfg, symbol)?;
    let steps = cfg.steps().max(1);
    Ok(scaling_residual(&state.rho, &state.u, state.params, 2, cfg.dt, steps, &state.options)?)
}

pub fn verify(suites: &[Suite], opts: &VerifyOptions) -> RunResult<Vec<SuiteReport>> {
    let mut out = vec![];
    for &s in suites {
        out.push(run_suite(s, opts)?);
    }
    Ok(out)
}

/// Lines printed by `verify`: one per check, then the constant ledger.
pub fn format_reports(reports: &[SuiteReport]) -> String {
    let mut s = String::new();
    for r in reports {
        writeln!(s, "== {} ({} checks, {} failed)", r.suite.name(), r.checks.len(), r.failures()).unwrap();
        for c in &r.checks {
            writeln!(s, "{c}").unwrap();
        }
    }
    writeln!(s, "== empirical constants").unwrap();
    for r in reports {
        for (name, v) in &r.constants {
            writeln!(s, "{}: {name} = {v:.6e}", r.suite.name()).unwrap();
        }
    }
    s
}
