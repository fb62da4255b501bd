//! Short-time contraction experiment for the difference of two Lagrangian
//! solutions: the energy functional of the difference against the norms of
//! the right-hand sides of the difference system, over a geometric sweep of
//! window lengths.

use std::io::Write;
use std::path::Path;

use crate::besov::sobolev_norm;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField2};
use crate::flow::{advect_points, FlowMap, VelocitySeries};
use crate::grid::Grid2D;
use crate::lagrangian::{twisted_rhs_terms, LagrangianState, TwistedNorms};
use crate::solver::{step_inhomogeneous, SimState, SolverOptions};
use crate::spectral::{evaluate_at, fractional_laplacian, gradient, partial, FractionalParams};

#[derive(Clone, Debug)]
pub struct ContractionConfig {
    pub dt: f64,
    /// Longest window; the sweep halves it `levels - 1` times.
    pub t_max: f64,
    pub levels: usize,
    /// RK4 substeps per solver step for the trajectories.
    pub substeps: usize,
    pub options: SolverOptions,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            t_max: 0.064,
            levels: 4,
            substeps: 2,
            options: SolverOptions::default(),
        }
    }
}

/// One window length of the sweep.
#[derive(Clone, Debug, Default)]
pub struct ContractionRow {
    pub t1: f64,
    pub delta_e: f64,
    pub sup_dv_hdot_alpha: f64,
    pub dt_dv: f64,
    pub lambda_dv: f64,
    pub grad_dpi: f64,
    pub div_dg: f64,
    pub df1: f64,
    pub df2: f64,
    pub dtg: f64,
    /// `(div_dg + |(df1, df2, dtg)|) / delta_e`; zero when both vanish.
    pub factor: f64,
}

impl ContractionRow {
    pub fn rhs(&self) -> f64 {
        self.div_dg + (self.df1 * self.df1 + self.df2 * self.df2 + self.dtg * self.dtg).sqrt()
    }

    fn terms(&self) -> [(&'static str, f64); 11] {
        [
            ("delta_e", self.delta_e),
            ("sup_dv_hdot_alpha", self.sup_dv_hdot_alpha),
            ("dt_dv", self.dt_dv),
            ("lambda_dv", self.lambda_dv),
            ("grad_dpi", self.grad_dpi),
            ("div_dg", self.div_dg),
            ("df1", self.df1),
            ("df2", self.df2),
            ("dtg", self.dtg),
            ("rhs", self.rhs()),
            ("factor", self.factor),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct ContractionReport {
    /// Increasing in `t1`.
    pub rows: Vec<ContractionRow>,
    /// Least-squares slope of `ln delta_e` against `ln t1`; NaN if fewer than two positive values.
    pub exponent: f64,
    /// Largest split-reconstruction mismatch of the nonlocal term seen along the run.
    pub split_mismatch: f64,
}

impl ContractionReport {
    /// Factor at the shortest window.
    pub fn shortest_factor(&self) -> f64 {
        self.rows.first().map(|r| r.factor).unwrap_or(f64::NAN)
    }

    /// Rows as `(t1, term, value)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "T1,term,value")?;
        for r in &self.rows {
            for (name, v) in r.terms() {
                writeln!(f, "{:.17e},{name},{:.17e}", r.t1, v)?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

struct Run {
    state: SimState,
    positions: Vec<(f64, f64)>,
    v_prev: VectorField2,
}

fn flow_map(grid: &Grid2D, positions: &[(f64, f64)], t: f64) -> Result<FlowMap> {
    let field = |c: usize| ScalarField {
        grid: grid.clone(),
        data: positions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let y = grid.point(i);
                if c == 0 {
                    p.0 - y.0
                } else {
                    p.1 - y.1
                }
            })
            .collect(),
    };
    let disp = VectorField2::new(field(0), field(1))?;
    let d = |c: usize, axis: usize| partial(&disp.comp[c], axis);
    let gradient = [d(0, 0).map(|v| v + 1.0), d(0, 1), d(1, 0), d(1, 1).map(|v| v + 1.0)];
    Ok(FlowMap {
        grid: grid.clone(),
        t0: 0.0,
        t1: t,
        substeps: 0,
        displacement: disp,
        gradient,
        inverse_displacement: None,
        inverse_gradient: None,
        warnings: vec![],
    })
}

fn compose(f: &ScalarField, pts: &[(f64, f64)]) -> ScalarField {
    ScalarField {
        grid: f.grid.clone(),
        data: evaluate_at(f, pts),
    }
}

impl Run {
    /// `u o X` at the current time.
    fn velocity(&self) -> Result<VectorField2> {
        let pts = &self.positions;
        VectorField2::new(compose(&self.state.u.comp[0], pts), compose(&self.state.u.comp[1], pts))
    }

    fn lagrangian(&self, dt: f64) -> Result<LagrangianState> {
        let g = self.state.grid().clone();
        let pts = &self.positions;
        let v = self.velocity()?;
        let pi = compose(&self.state.pi, pts);
        let dvdt = v.sub(&self.v_prev)?.scale(1.0 / dt);
        let fm = flow_map(&g, pts, self.state.t)?;
        LagrangianState::from_parts(self.state.rho_initial.clone(), v, pi, fm)?.with_time_derivative(dvdt)
    }

    fn advance(&mut self, dt: f64, substeps: usize) -> Result<()> {
        let next = step_inhomogeneous(&self.state, dt)?;
        let series = VelocitySeries::new(vec![self.state.t, next.t], vec![self.state.u.clone(), next.u.clone()])?;
        self.v_prev = self.velocity()?;
        self.positions = advect_points(&self.positions, |t, x1, x2| series.velocity_at(t, x1, x2), self.state.t, next.t, substeps);
        self.state = next;
        Ok(())
    }
}

/// Run both solutions to `t_max` and evaluate the ledger at every step.
pub fn contraction_experiment(
    run1: (&ScalarField, &VectorField2),
    run2: (&ScalarField, &VectorField2),
    params: FractionalParams,
    cfg: &ContractionConfig,
) -> Result<ContractionReport> {
    if !(cfg.dt > 0.0 && cfg.t_max > 0.0) || cfg.levels == 0 {
        return Err(Error::InvalidParameter("contraction sweep needs dt > 0, t_max > 0, levels >= 1".into()));
    }
    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let block = 1usize << (cfg.levels - 1);
    if steps == 0 || steps % block != 0 || ((steps as f64) * cfg.dt - cfg.t_max).abs() > 1e-9 * cfg.t_max {
        return Err(Error::InvalidParameter(format!(
            "t_max / dt = {} must be an integer multiple of 2^(levels-1) = {block}",
            cfg.t_max / cfg.dt
        )));
    }
    let alpha = params.alpha;
    let grid = run1.0.grid.clone();
    let nodes: Vec<(f64, f64)> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let start = |(rho, u): (&ScalarField, &VectorField2)| -> Result<Run> {
        let state = SimState::new(rho.clone(), u, params, cfg.options.clone())?;
        let v0 = state.u.clone();
        Ok(Run {
            state,
            positions: nodes.clone(),
            v_prev: v0,
        })
    };
    let mut a = start(run1)?;
    let mut b = start(run2)?;

    let mut sup_h: f64 = sobolev_norm(&a.state.u.comp[0].sub(&b.state.u.comp[0])?, alpha)
        .hypot(sobolev_norm(&a.state.u.comp[1].sub(&b.state.u.comp[1])?, alpha));
    let mut acc = [0.0f64; 7];
    let mut split_mismatch: f64 = 0.0;
    let mut rows = vec![];
    let marks: Vec<usize> = (0..cfg.levels).rev().map(|k| steps >> k).collect();
    for n in 1..=steps {
        a.advance(cfg.dt, cfg.substeps)?;
        b.advance(cfg.dt, cfg.substeps)?;
        let la = a.lagrangian(cfg.dt)?;
        let lb = b.lagrangian(cfg.dt)?;
        let dv = la.v.sub(&lb.v)?;
        let h_alpha = sobolev_norm(&dv.comp[0], alpha).hypot(sobolev_norm(&dv.comp[1], alpha));
        sup_h = sup_h.max(h_alpha);
        let terms: TwistedNorms = twisted_rhs_terms(&la, &lb, alpha)?.norms;
        split_mismatch = split_mismatch.max(terms.split_mismatch);
        let dpi = la.pi.sub(&lb.pi)?;
        let samples = [
            la.dvdt.sub(&lb.dvdt)?.l2_norm(),
            fractional_laplacian(&dv, 2.0 * alpha)?.l2_norm(),
            gradient(&dpi).l2_norm(),
            terms.div_dg,
            terms.df1,
            terms.df2,
            terms.dtg,
        ];
        for (s, x) in acc.iter_mut().zip(samples) {
            *s += cfg.dt * x * x;
        }
        if marks.contains(&n) {
            let l2 = acc.map(f64::sqrt);
            let delta_e = sup_h + (l2[0] * l2[0] + l2[1] * l2[1] + l2[2] * l2[2]).sqrt();
            let mut row = ContractionRow {
                t1: n as f64 * cfg.dt,
                delta_e,
                sup_dv_hdot_alpha: sup_h,
                dt_dv: l2[0],
                lambda_dv: l2[1],
                grad_dpi: l2[2],
                div_dg: l2[3],
                df1: l2[4],
                df2: l2[5],
                dtg: l2[6],
                factor: 0.0,
            };
            let rhs = row.rhs();
            row.factor = if delta_e > 0.0 { rhs / delta_e } else if rhs > 0.0 { f64::INFINITY } else { 0.0 };
            rows.push(row);
        }
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.delta_e > 0.0)
        .map(|r| (r.t1.ln(), r.delta_e.ln()))
        .collect();
    let exponent = if pts.len() < 2 {
        f64::NAN
    } else {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        num / den
    };
    Ok(ContractionReport {
        rows,
        exponent,
        split_mismatch,
    })
}
