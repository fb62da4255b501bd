//! Per-step monitors of the energy, density and perturbation estimates, and a
//! post-hoc report of empirical constants and growth trends.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::besov::{besov_norm, BesovParams, DyadicPartition, Exponent};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField2};
use crate::patch::{c1gamma_seminorm, PatchContour};
use crate::solver::{PerturbationState, SimState};
use crate::spectral::{divergence_norm, fractional_laplacian, gradient};

/// Relative energy-balance defect above which a step is flagged.
pub const ENERGY_WARN: f64 = 1e-5;
/// Growth of `||rho - 1||_inf` tolerated with an unclamped interpolant.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-12;
pub const DIVERGENCE_WARN: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `||u||_2^2`.
    pub energy_l2: f64,
    /// `2 nu \int_0^t ||Lambda^alpha u||_2^2`, each mode taken exponential across a step.
    pub dissipation_cum: f64,
    pub besov_alpha_p2: f64,
    pub rho_dev_linf: f64,
    pub rho_dev_l2: f64,
    /// `sup ||w||_2 + (\int ||Lambda^alpha w||_2^2)^{1/2}` so far.
    pub w_energy: f64,
    /// `sup ||w||_{B^alpha_{p,2}} + ||(d_t w, Lambda^{2 alpha} w, grad p)||_{L^2_t L^p}` so far.
    pub w_maxreg: f64,
    /// Same functional for `(u, pi)`.
    pub u_maxreg: f64,
    /// `(\int rho |u|^2 + dissipation - initial) / initial`.
    pub balance_defect: f64,
    /// NaN without a patch.
    pub patch_area: f64,
    pub patch_c1gamma: f64,
    pub pressure_iters: usize,
    pub divergence_residual: f64,
}

pub const CSV_HEADER: &str = "t,energy_L2,dissipation_cum,besov_alpha_p2,rho_dev_Linf,rho_dev_L2,w_energy,w_maxreg,u_maxreg,balance_defect,patch_area,patch_c1gamma,pressure_iters,divergence_residual";

impl DiagnosticsRecord {
    fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.energy_l2,
            self.dissipation_cum,
            self.besov_alpha_p2,
            self.rho_dev_linf,
            self.rho_dev_l2,
            self.w_energy,
            self.w_maxreg,
            self.u_maxreg,
            self.balance_defect,
            self.patch_area,
            self.patch_c1gamma,
            self.divergence_residual,
        ]
    }

    pub fn is_finite(&self) -> bool {
        let v = self.values();
        v[..10].iter().chain(&v[12..]).all(|x| x.is_finite())
    }

    pub fn to_csv_row(&self) -> String {
        let v = self.values();
        let mut cols: Vec<String> = v[..12].iter().map(|x| format!("{x:.17e}")).collect();
        cols.push(self.pressure_iters.to_string());
        cols.push(format!("{:.17e}", v[12]));
        cols.join(",")
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 14 {
            return Err(Error::Format(format!("expected 14 columns, got {}", cols.len())));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("column {}: {e}", i + 1)))
        };
        Ok(Self {
            t: f(0)?,
            energy_l2: f(1)?,
            dissipation_cum: f(2)?,
            besov_alpha_p2: f(3)?,
            rho_dev_linf: f(4)?,
            rho_dev_l2: f(5)?,
            w_energy: f(6)?,
            w_maxreg: f(7)?,
            u_maxreg: f(8)?,
            balance_defect: f(9)?,
            patch_area: f(10)?,
            patch_c1gamma: f(11)?,
            pressure_iters: cols[12]
                .parse()
                .map_err(|e| Error::Format(format!("column 13: {e}")))?,
            divergence_residual: f(13)?,
        })
    }
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    for r in records {
        writeln!(f, "{}", r.to_csv_row())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(Error::Format("missing diagnostics header".into()));
    }
    lines
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| DiagnosticsRecord::from_csv_row(&l?))
        .collect()
}

/// A monitor that was tripped at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Warning {
    pub t: f64,
    /// `energy-balance`, `density-max-principle` or `incompressibility`.
    pub check: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "WARN t={:.6} {}: {:.3e} > {:.3e}", self.t, self.check, self.value, self.threshold)
    }
}

/// Norms of the data that set the size of every estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataNorms {
    pub alpha: f64,
    pub p: f64,
    /// `||u_0||_{H^1} + ||u_0||_{B^alpha_{p,2}}`.
    pub u0: f64,
    pub u0_h1: f64,
    /// `||rho_0 - 1||_2 + ||rho_0 - 1||_inf`.
    pub a0: f64,
}

struct Previous {
    t: f64,
    /// `|k|^{2 alpha} |u_k|^2` per mode, normalized so the sum is `||Lambda^alpha u||_2^2`.
    modal: Vec<f64>,
    u: VectorField2,
    w: VectorField2,
    lambda_w: f64,
    rho_dev_linf: f64,
}

/// Accumulates time integrals and suprema along a run.
pub struct Monitor {
    pub norms: DataNorms,
    besov: BesovParams,
    clamped: bool,
    initial_energy: f64,
    prev: Option<Previous>,
    dissipation: f64,
    w_l2_sup: f64,
    w_lambda_int: f64,
    w_besov_sup: f64,
    w_reg_int: f64,
    u_besov_sup: f64,
    u_reg_int: f64,
    pub records: Vec<DiagnosticsRecord>,
    pub warnings: Vec<Warning>,
}

fn vector_besov(u: &VectorField2, bp: &BesovParams) -> f64 {
    besov_norm(&u.comp[0], bp).hypot(besov_norm(&u.comp[1], bp))
}

fn vector_lp(u: &VectorField2, p: f64) -> f64 {
    u.magnitude().lp_norm(p)
}

fn lambda_alpha_sq(u: &VectorField2, alpha: f64) -> Result<f64> {
    Ok(fractional_laplacian(u, alpha)?.l2_norm().powi(2))
}

fn modal_dissipation(u: &VectorField2, alpha: f64) -> Vec<f64> {
    let g = u.grid();
    let norm = g.box_length().powi(2) / (g.len() as f64).powi(2);
    let s = [u.comp[0].to_spectrum(), u.comp[1].to_spectrum()];
    (0..g.len())
        .map(|i| {
            let (k1, k2) = g.wavevector(i);
            let k2s = k1 * k1 + k2 * k2;
            if k2s == 0.0 {
                0.0
            } else {
                norm * k2s.powf(alpha) * (s[0].data[i].norm_sqr() + s[1].data[i].norm_sqr())
            }
        })
        .collect()
}

/// `\int_0^h f` for `f` exponential between the endpoint values `a` and `b`.
fn exponential_mean(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo <= 1e-6 * hi || hi - lo <= 1e-9 * hi {
        return 0.5 * (a + b);
    }
    (hi - lo) / (hi / lo).ln()
}

fn h1_norm(u: &VectorField2) -> f64 {
    let g0 = gradient(&u.comp[0]);
    let g1 = gradient(&u.comp[1]);
    (u.l2_norm().powi(2) + g0.l2_norm().powi(2) + g1.l2_norm().powi(2)).sqrt()
}

impl Monitor {
    /// `p` is the Lebesgue exponent of the maximal-regularity norms.
    pub fn new(initial: &SimState, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("Lebesgue exponent {p} must be >= 1")));
        }
        let g = initial.grid();
        let alpha = initial.params.alpha;
        let besov = BesovParams::new(alpha, Exponent::Finite(p), Exponent::Finite(2.0), DyadicPartition::covering(g));
        let a0 = initial.rho_initial.map(|r| r - 1.0);
        let u0_h1 = h1_norm(&initial.u);
        let norms = DataNorms {
            alpha,
            p,
            u0: u0_h1 + vector_besov(&initial.u, &besov),
            u0_h1,
            a0: a0.l2_norm() + a0.max_abs(),
        };
        Ok(Self {
            norms,
            besov,
            clamped: initial.options.interpolant == crate::interp::Interpolant::BilinearClamped,
            initial_energy: initial.weighted_energy()?,
            prev: None,
            dissipation: 0.0,
            w_l2_sup: 0.0,
            w_lambda_int: 0.0,
            w_besov_sup: 0.0,
            w_reg_int: 0.0,
            u_besov_sup: 0.0,
            u_reg_int: 0.0,
            records: vec![],
            warnings: vec![],
        })
    }

    /// Record one state. Monitors never fail the run; errors here are only
    /// returned for grid mismatches between `state`, `aux` and earlier steps.
    pub fn monitor_step(&mut self, state: &SimState, aux: &PerturbationState, patch: Option<&PatchContour>) -> Result<DiagnosticsRecord> {
        let alpha = self.norms.alpha;
        let p = self.norms.p;
        let nu = state.params.nu;
        let u = &state.u;
        let w = &aux.w;
        let modal = modal_dissipation(u, alpha);
        let lambda_w = lambda_alpha_sq(w, alpha)?;
        let reg = |f: &VectorField2, pressure: &ScalarField, dtf: Option<VectorField2>| -> Result<f64> {
            let dt_part = dtf.map(|d| vector_lp(&d, p).powi(2)).unwrap_or(0.0);
            Ok(dt_part + vector_lp(&fractional_laplacian(f, 2.0 * alpha)?, p).powi(2) + vector_lp(&gradient(pressure), p).powi(2))
        };
        let (du, dw) = match &self.prev {
            Some(prev) if state.t > prev.t => {
                let h = state.t - prev.t;
                (Some(u.sub(&prev.u)?.scale(1.0 / h)), Some(w.sub(&prev.w)?.scale(1.0 / h)))
            }
            _ => (None, None),
        };
        let reg_u = reg(u, &state.pi, du)?;
        let reg_w = reg(w, &aux.p, dw)?;
        if let Some(prev) = &self.prev {
            let h = state.t - prev.t;
            // exact for modes decaying exponentially across the step
            let step: f64 = modal.iter().zip(&prev.modal).map(|(a, b)| exponential_mean(*a, *b)).sum();
            self.dissipation += 2.0 * nu * h * step;
            self.w_lambda_int += 0.5 * h * (lambda_w + prev.lambda_w);
            self.w_reg_int += h * reg_w;
            self.u_reg_int += h * reg_u;
        }
        self.w_l2_sup = self.w_l2_sup.max(w.l2_norm());
        self.w_besov_sup = self.w_besov_sup.max(vector_besov(w, &self.besov));
        let besov_u = vector_besov(u, &self.besov);
        self.u_besov_sup = self.u_besov_sup.max(besov_u);

        let a = &aux.a;
        let rho_dev_linf = a.max_abs();
        let weighted = state.weighted_energy()?;
        let balance_defect = if self.initial_energy > 0.0 {
            (weighted + self.dissipation - self.initial_energy) / self.initial_energy
        } else {
            weighted + self.dissipation
        };
        let (patch_area, patch_c1gamma) = match patch {
            Some(c) => (c.area(), c1gamma_seminorm(c, c.gamma).unwrap_or(f64::NAN)),
            None => (f64::NAN, f64::NAN),
        };
        let rec = DiagnosticsRecord {
            t: state.t,
            energy_l2: u.l2_norm().powi(2),
            dissipation_cum: self.dissipation,
            besov_alpha_p2: besov_u,
            rho_dev_linf,
            rho_dev_l2: a.l2_norm(),
            w_energy: self.w_l2_sup + self.w_lambda_int.sqrt(),
            w_maxreg: self.w_besov_sup + self.w_reg_int.sqrt(),
            u_maxreg: self.u_besov_sup + self.u_reg_int.sqrt(),
            balance_defect,
            patch_area,
            patch_c1gamma,
            pressure_iters: state.pressure_iters,
            divergence_residual: divergence_norm(u),
        };

        if balance_defect.abs() > ENERGY_WARN {
            self.warn(state.t, "energy-balance", balance_defect.abs(), ENERGY_WARN);
        }
        if let Some(prev) = &self.prev {
            let slack = if self.clamped { 0.0 } else { MAX_PRINCIPLE_SLACK };
            if rho_dev_linf > prev.rho_dev_linf + slack {
                let grew = rho_dev_linf - prev.rho_dev_linf;
                self.warn(state.t, "density-max-principle", grew, slack);
            }
        }
        if rec.divergence_residual > DIVERGENCE_WARN {
            self.warn(state.t, "incompressibility", rec.divergence_residual, DIVERGENCE_WARN);
        }
        self.prev = Some(Previous {
            t: state.t,
            modal,
            u: u.clone(),
            w: w.clone(),
            lambda_w,
            rho_dev_linf,
        });
        self.records.push(rec.clone());
        Ok(rec)
    }

    fn warn(&mut self, t: f64, check: &'static str, value: f64, threshold: f64) {
        self.warnings.push(Warning { t, check, value, threshold });
    }
}

/// Growth trend and empirical constant of one monitored estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateLine {
    pub name: &'static str,
    /// Final value of the left-hand side.
    pub value: f64,
    /// Smallest `C` with `lhs(t) <= C * shape` for every recorded `t`.
    pub constant: f64,
    /// Least-squares slope over the final half, relative to the final value per unit time.
    pub trend: f64,
    pub growing: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub lines: Vec<EstimateLine>,
}

impl EstimateReport {
    pub fn any_growing(&self) -> bool {
        self.lines.iter().any(|l| l.growing)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("estimate,final,constant,trend,growing\n");
        for l in &self.lines {
            s.push_str(&format!("{},{:.6e},{:.6e},{:.3e},{}\n", l.name, l.value, l.constant, l.trend, l.growing));
        }
        s
    }
}

fn slope(t: &[f64], y: &[f64]) -> f64 {
    let m = t.len() as f64;
    let mt = t.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let den: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Empirical constants of the a priori estimates over a recorded run. Shapes use
/// unit constants inside exponentials; `trend_tol` bounds the relative slope
/// over the final half of the run.
pub fn estimate_report(records: &[DiagnosticsRecord], norms: &DataNorms, trend_tol: f64) -> Result<EstimateReport> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!("{} diagnostics records", records.len())));
    }
    let alpha = norms.alpha;
    let nu_free_energy = |r: &DiagnosticsRecord| r.energy_l2.sqrt();
    let growth_power = (4.0 * alpha - 1.0) / (2.0 * alpha - 1.0);
    let velocity_shape = 1.0 + norms.u0.powf(growth_power);
    let w_shape = norms.a0 * norms.u0_h1.powi(2).exp();
    let wp_shape = norms.a0 * norms.u0.powi(2).exp();
    let a0_shape = norms.a0;

    let mut sup_rho = 0.0f64;
    let mut sup_vel = 0.0f64;
    let mut series: Vec<(&'static str, Vec<f64>, f64)> = vec![
        ("density-deviation", vec![], a0_shape),
        ("velocity-maximal-regularity", vec![], velocity_shape),
        ("perturbation-energy", vec![], w_shape),
        ("perturbation-maximal-regularity", vec![], wp_shape),
    ];
    for r in records {
        sup_rho = sup_rho.max(r.rho_dev_l2 + r.rho_dev_linf);
        sup_vel = sup_vel.max(nu_free_energy(r));
        series[0].1.push(sup_rho);
        series[1].1.push(sup_vel + r.u_maxreg);
        series[2].1.push(r.w_energy);
        series[3].1.push(r.w_maxreg);
    }
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let half = records.len() / 2;
    let span = (times[times.len() - 1] - times[half]).max(f64::MIN_POSITIVE);
    let lines = series
        .into_iter()
        .map(|(name, ys, shape)| {
            let value = *ys.last().unwrap();
            let peak = ys.iter().cloned().fold(0.0, f64::max);
            let constant = if shape > 0.0 {
                peak / shape
            } else if peak > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let s = slope(&times[half..], &ys[half..]);
            let trend = if value > 0.0 { s * span / value } else { 0.0 };
            EstimateLine {
                name,
                value,
                constant,
                trend,
                growing: trend > trend_tol,
            }
        })
        .collect();
    Ok(EstimateReport { lines })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::solver::{step_inhomogeneous, SolverOptions};
    use crate::spectral::{cosine_mode, FractionalParams};
    use std::f64::consts::PI;

    fn single_mode(g: &Grid2D) -> VectorField2 {
        let s = cosine_mode(g, 0, 2).scale(0.3);
        VectorField2::new(s, ScalarField::zeros(g)).unwrap()
    }

    fn run(rho: ScalarField, u: &VectorField2, steps: usize, dt: f64) -> Monitor {
        let p = FractionalParams::for_solver(0.75, 1.0).unwrap();
        let mut s = SimState::new(rho, u, p, SolverOptions::default()).unwrap();
        let mut m = Monitor::new(&s, 4.0).unwrap();
        m.monitor_step(&s, &s.perturbation().unwrap(), None).unwrap();
        for _ in 0..steps {
            s = step_inhomogeneous(&s, dt).unwrap();
            m.monitor_step(&s, &s.perturbation().unwrap(), None).unwrap();
        }
        m
    }

    #[test]
    fn single_mode_energy_is_balanced() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let m = run(ScalarField::constant(&g, 1.0), &single_mode(&g), 20, 0.01);
        let r0 = &m.records[0];
        for r in &m.records {
            assert!((r.energy_l2 + r.dissipation_cum - r0.energy_l2).abs() < 1e-6 * r0.energy_l2, "{r:?}");
        }
        assert!(m.warnings.is_empty(), "{:?}", m.warnings);
    }

    #[test]
    fn zero_data_gives_zero_record() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let m = run(ScalarField::constant(&g, 1.0), &VectorField2::zeros(&g), 3, 0.01);
        for r in &m.records {
            assert_eq!(r.energy_l2, 0.0);
            assert_eq!(r.dissipation_cum, 0.0);
            assert_eq!(r.w_energy, 0.0);
            assert_eq!(r.w_maxreg, 0.0);
            assert!(r.is_finite());
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let rho = cosine_mode(&g, 1, 0).map(|v| 1.0 + 0.01 * v);
        let m = run(rho, &single_mode(&g), 4, 0.01);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&path, &m.records).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), m.records.len());
        for (a, b) in back.iter().zip(&m.records) {
            assert_eq!(a.to_csv_row(), b.to_csv_row());
            assert_eq!(a.t.to_bits(), b.t.to_bits());
        }
    }

    #[test]
    fn decaying_run_report_has_no_growth() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let m = run(ScalarField::constant(&g, 1.0), &single_mode(&g), 100, 0.02);
        let rep = estimate_report(&m.records, &m.norms, 1e-2).unwrap();
        for l in &rep.lines {
            assert!(l.constant.is_finite(), "{l:?}");
        }
        // the perturbation vanishes identically for constant density
        assert_eq!(rep.lines[2].value, 0.0);
        assert_eq!(rep.lines[3].value, 0.0);
        assert!(!rep.any_growing(), "{}", rep.to_table());
        assert!(estimate_report(&m.records[..1], &m.norms, 1e-2).is_err());
    }

    #[test]
    fn constants_only_grow_when_the_run_is_extended() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let rho = cosine_mode(&g, 1, 1).map(|v| 1.0 + 0.05 * v);
        let m = run(rho, &single_mode(&g), 10, 0.02);
        let short = estimate_report(&m.records[..5], &m.norms, 1e-2).unwrap();
        let long = estimate_report(&m.records, &m.norms, 1e-2).unwrap();
        for (a, b) in short.lines.iter().zip(&long.lines) {
            assert!(b.constant >= a.constant);
        }
    }
}
