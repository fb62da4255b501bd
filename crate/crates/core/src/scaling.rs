//! Scale-invariance check for the variable-density system.
//!
//! If `(rho, u)` solves the system on a box of side `L` then
//! `(rho(lambda^{2a} t, lambda x), lambda^{2a-1} u(lambda^{2a} t, lambda x))` solves it on a box
//! of side `L / lambda`. Run A uses the original data; run B uses the rescaled
//! data sampled on every `lambda`-th node, so both runs see identical node sets and
//! identical per-step dissipation factors. Data must be band limited below
//! `n / (3 lambda)` so the coarse grid represents it exactly.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField2};
use crate::grid::Grid2D;
use crate::solver::{step_inhomogeneous, SimState, SolverOptions};
use crate::spectral::{dealias, leray_project, FractionalParams};

#[derive(Clone, Debug)]
pub struct ScalingReport {
    pub lambda: usize,
    /// Relative `L^2` mismatch of run B against the rescaled run A.
    pub residual: f64,
    /// Relative `L^2` change of run A when the step is halved.
    pub self_error: f64,
    /// Mismatch with the velocity scaled by `lambda` instead of `lambda^{2a-1}`.
    pub negative_control: f64,
    /// Fraction of the initial energy above the coarse grid's dealiasing radius.
    pub truncated_energy: f64,
}

impl ScalingReport {
    /// Residual within `tol_factor` self-errors and control at least `control_factor` residuals.
    pub fn passes(&self, tol_factor: f64, control_factor: f64) -> bool {
        self.residual <= tol_factor * self.self_error && self.negative_control >= control_factor * self.residual
    }
}

/// Every `stride`-th node of `f`, on the grid `coarse`.
pub fn subsample(f: &ScalarField, coarse: &Grid2D, stride: usize) -> Result<ScalarField> {
    let n = f.grid.n();
    if coarse.n() * stride != n {
        return Err(Error::GridMismatch);
    }
    let m = coarse.n();
    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            data.push(f.data[i * stride * n + j * stride]);
        }
    }
    ScalarField::from_vec(coarse, data)
}

fn subsample_vector(u: &VectorField2, coarse: &Grid2D, stride: usize) -> Result<VectorField2> {
    VectorField2::new(subsample(&u.comp[0], coarse, stride)?, subsample(&u.comp[1], coarse, stride)?)
}

fn evolve(rho: ScalarField, u: &VectorField2, params: FractionalParams, opts: &SolverOptions, dt: f64, steps: usize) -> Result<SimState> {
    let mut s = SimState::new(rho, u, params, opts.clone())?;
    for _ in 0..steps {
        s = step_inhomogeneous(&s, dt)?;
    }
    Ok(s)
}

/// Run the rescaling comparison for integer `lambda` dividing the grid size.
pub fn scaling_residual(
    rho0: &ScalarField,
    u0: &VectorField2,
    params: FractionalParams,
    lambda: usize,
    dt: f64,
    steps: usize,
    opts: &SolverOptions,
) -> Result<ScalingReport> {
    let grid = rho0.grid.clone();
    let n = grid.n();
    if lambda == 0 || n % lambda != 0 || !(n / lambda).is_power_of_two() || n / lambda < 8 {
        return Err(Error::InvalidParameter(format!(
            "scaling factor {lambda} must divide n = {n} leaving a power of two >= 8"
        )));
    }
    let coarse = Grid2D::new(n / lambda, grid.box_length() / lambda as f64)?;
    let lam = lambda as f64;
    // the transformation claimed for order 2 alpha, whatever symbol the solver uses
    let order = 2.0 * params.alpha;
    let vel_scale = lam.powf(order - 1.0);

    let run_a = evolve(rho0.clone(), u0, params, opts, dt, steps)?;
    let run_a_half = evolve(rho0.clone(), u0, params, opts, dt / 2.0, 2 * steps)?;
    let norm_a = run_a.u.l2_norm();
    let self_error = run_a.u.sub(&run_a_half.u)?.l2_norm() / norm_a;

    let expected = subsample_vector(&run_a.u, &coarse, lambda)?.scale(vel_scale);
    let rho_b = subsample(rho0, &coarse, lambda)?;
    let u_b0 = subsample_vector(&leray_project(&dealias(u0)), &coarse, lambda)?;
    let dt_b = dt / lam.powf(order);
    let run_b = evolve(rho_b.clone(), &u_b0.scale(vel_scale), params, opts, dt_b, steps)?;
    let residual = run_b.u.sub(&expected)?.l2_norm() / expected.l2_norm();
    let control = evolve(rho_b, &u_b0.scale(lam), params, opts, dt_b, steps)?;
    let negative_control = control.u.sub(&expected)?.l2_norm() / expected.l2_norm();

    let truncated_energy = {
        let total = u0.l2_norm().powi(2);
        let radius = (n / lambda) as f64 / 3.0;
        let mut above = 0.0;
        for c in &u0.comp {
            let s = c.to_spectrum();
            for (idx, z) in s.data.iter().enumerate() {
                let (k1, k2) = grid.wavevector(idx);
                if (k1 * k1 + k2 * k2).sqrt() / grid.k0() >= radius {
                    above += z.norm_sqr();
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            above * grid.box_length().powi(2) / (n * n) as f64 / (n * n) as f64 / total
        }
    };
    Ok(ScalingReport {
        lambda,
        residual,
        self_error,
        negative_control,
        truncated_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use crate::spectral::Symbol;
    use std::f64::consts::PI;

    fn data(n: usize) -> (ScalarField, VectorField2) {
        let g = Grid2D::new(n, 2.0 * PI).unwrap();
        let u = sample::divergence_free(&g, 1.0, 2.5, 0.3, &mut sample::rng(4));
        let a = sample::band_limited(&g, 1.0, 2.0, 0.0, &mut sample::rng(5));
        (a.map(|v| 1.0 + 0.05 * v), u)
    }

    #[test]
    fn subsample_keeps_low_modes() {
        let g = Grid2D::new(32, 4.0).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (PI * x / 2.0).sin() * (PI * y).cos());
        let c = Grid2D::new(16, 2.0).unwrap();
        let s = subsample(&f, &c, 2).unwrap();
        let oracle = ScalarField::from_fn(&c, |x, y| (PI * x).sin() * (2.0 * PI * y).cos());
        assert!(s.sub(&oracle).unwrap().max_abs() < 1e-12);
        assert!(subsample(&f, &c, 4).is_err());
    }

    #[test]
    fn unit_factor_is_trivially_invariant() {
        let (rho, u) = data(16);
        let p = FractionalParams::for_solver(0.75, 1.0).unwrap();
        let r = scaling_residual(&rho, &u, p, 1, 0.02, 3, &SolverOptions::default()).unwrap();
        assert!(r.residual < 1e-13, "{r:?}");
    }

    #[test]
    fn fractional_symbol_passes_and_full_laplacian_fails() {
        let (rho, u) = data(32);
        let p = FractionalParams::for_solver(0.75, 1.0).unwrap();
        let opts = SolverOptions::default();
        let r = scaling_residual(&rho, &u, p, 2, 0.02, 5, &opts).unwrap();
        assert!(r.passes(5.0, 10.0), "{r:?}");
        let wrong = FractionalParams { symbol: Symbol::FullLaplacian, ..p };
        let r = scaling_residual(&rho, &u, wrong, 2, 0.02, 5, &opts).unwrap();
        assert!(!r.passes(5.0, 10.0), "{r:?}");
    }
}
