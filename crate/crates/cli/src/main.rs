use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fins_cli::commands::{self, format_reports, RunError, PATCH_AREA_TOL};
use fins_cli::config::RunConfig;
use fins_core::verify::{Suite, VerifyOptions};
use fins_core::Symbol;

/// Simulator and verification harness for 2D fractional inhomogeneous Navier-Stokes.
#[derive(Parser)]
#[command(name = "fins", version)]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of every random choice (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace |k|^{2 alpha} by |k|^2 everywhere (negative control)
    #[arg(long, global = true, hide = true)]
    fault_full_laplacian: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured simulation and write snapshots and diagnostics
    Simulate,
    /// Run verification suites: kernels, besov, lagrangian, scaling or all
    Verify {
        #[arg(required = true, num_args = 1..)]
        suites: Vec<String>,
    },
    /// Density-patch run; fails if the patch area drifts by more than 1e-4
    PatchDemo,
    /// Compare a run with its lambda = 2 rescaling
    ScalingCheck,
}

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        RunError::Config(_) => ExitCode::from(EXIT_USAGE),
        _ => ExitCode::from(EXIT_RUNTIME),
    }
}

fn parse_suites(names: &[String]) -> Result<Vec<Suite>, String> {
    let mut out = vec![];
    for n in names {
        if n == "all" {
            out.extend(Suite::ALL);
        } else {
            out.push(n.parse::<Suite>().map_err(|_| format!("unknown suite `{n}` (kernels|besov|lagrangian|scaling|all)"))?);
        }
    }
    out.dedup();
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: cannot start {t} worker threads");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::from_file(p) {
            Ok(c) => c,
            Err(e) => return fail(e.into()),
        },
        None => RunConfig::default(),
    };
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let symbol = if cli.fault_full_laplacian {
        Symbol::FullLaplacian
    } else {
        Symbol::Fractional
    };
    match cli.command {
        Command::Simulate => match commands::simulate(&cfg, &cfg.out_dir, symbol) {
            Ok(s) => {
                print!("{}", s.text);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Verify { suites } => {
            let suites = match parse_suites(&suites) {
                Ok(s) => s,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(EXIT_USAGE);
                }
            };
            let opts = VerifyOptions {
                n: cfg.n,
                seed: cfg.seed,
                symbol,
            };
            match commands::verify(&suites, &opts) {
                Ok(reports) => {
                    print!("{}", format_reports(&reports));
                    if reports.iter().all(|r| r.passed()) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAILED)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::PatchDemo => match commands::patch_demo(&cfg, &cfg.out_dir, symbol) {
            Ok((s, ok)) => {
                print!("{}", s.text);
                let verdict = if ok { "PASS" } else { "FAIL" };
                println!("{verdict} patch area drift {:.3e} (need <= {PATCH_AREA_TOL:.0e})", s.patch_area_drift.unwrap_or(0.0));
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_FAILED)
                }
            }
            Err(e) => fail(e),
        },
        Command::ScalingCheck => match commands::scaling_check(&cfg, symbol) {
            Ok(r) => {
                println!("lambda = {}", r.lambda);
                println!("residual = {:.6e}", r.residual);
                println!("dt_halving_error = {:.6e}", r.self_error);
                println!("negative_control = {:.6e}", r.negative_control);
                println!("truncated_energy = {:.6e}", r.truncated_energy);
                let ok = r.passes(5.0, 10.0);
                println!("{} residual <= 5 x dt-halving error and control >= 10 x residual", if ok { "PASS" } else { "FAIL" });
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_FAILED)
                }
            }
            Err(e) => fail(e),
        },
    }
}
