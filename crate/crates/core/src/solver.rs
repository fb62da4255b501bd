//! Time stepping for the homogeneous reference flow and the variable-density system.
//!
//! All steppers are second-order exponential Runge-Kutta schemes (Cox-Matthews
//! ETD2RK): the dissipation is integrated exactly per Fourier mode and the
//! remaining terms enter through the `phi1`/`phi2` weights.

use crate::error::{Error, Result};
use crate::field::{ScalarField, Spectrum, VectorField2};
use crate::flow::{backward_displacement, compose_with, VelocitySeries};
use crate::grid::Grid2D;
use crate::interp::Interpolant;
use crate::spectral::{
    advect_scalar, advect_vector, biot_savart, dealias, divergence, gradient, inverse_laplacian, leray_project,
    leray_spectra, phi1, phi2, vector_from_spectra, vector_spectra, FractionalParams,
};

/// Per-mode coefficients `e^z`, `phi1(z)`, `phi2(z)` with `z = -dt nu |k|^{2 alpha}`.
struct EtdCoeffs {
    e: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

impl EtdCoeffs {
    fn new(grid: &Grid2D, dt: f64, params: &FractionalParams) -> Self {
        let mut e = Vec::with_capacity(grid.len());
        let mut p1 = Vec::with_capacity(grid.len());
        let mut p2 = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let (k1, k2) = grid.wavevector(idx);
            let z = -dt * params.rate(k1 * k1 + k2 * k2);
            e.push(z.exp());
            p1.push(phi1(z));
            p2.push(phi2(z));
        }
        Self { e, p1, p2 }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time step {dt} must be positive")))
    }
}

fn finite_or_blowup(u: &VectorField2, t: f64) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::BlowupDetected {
            t,
            norm: f64::INFINITY,
            cap: f64::INFINITY,
        })
    }
}

/// `P(-(u . grad) u)` with the dealiased product.
pub fn homogeneous_nonlinearity(u: &VectorField2) -> Result<VectorField2> {
    Ok(leray_project(&advect_vector(u, u)?.scale(-1.0)))
}

/// `-Delta^{-1} div((u . grad) u)`, the pressure of the constant-density flow.
pub fn homogeneous_pressure(u: &VectorField2) -> Result<ScalarField> {
    Ok(inverse_laplacian(&divergence(&advect_vector(u, u)?)).scale(-1.0))
}

/// One ETD2RK step of `d_t u + nu Lambda^{2 alpha} u = P(-(u . grad) u)`.
pub fn step_homogeneous(u: &VectorField2, dt: f64, params: &FractionalParams) -> Result<VectorField2> {
    check_dt(dt)?;
    let c = EtdCoeffs::new(u.grid(), dt, params);
    let u0 = vector_spectra(u);
    let n0 = vector_spectra(&homogeneous_nonlinearity(u)?);
    let mut us = u0.clone();
    for k in 0..2 {
        for i in 0..us[k].data.len() {
            us[k].data[i] = u0[k].data[i] * c.e[i] + n0[k].data[i] * (dt * c.p1[i]);
        }
    }
    let n1 = vector_spectra(&homogeneous_nonlinearity(&vector_from_spectra(&us))?);
    for k in 0..2 {
        for i in 0..us[k].data.len() {
            us[k].data[i] += (n1[k].data[i] - n0[k].data[i]) * (dt * c.p2[i]);
        }
    }
    let out = vector_from_spectra(&us);
    finite_or_blowup(&out, dt)?;
    Ok(out)
}

/// One ETD2RK step of `d_t omega + u . grad omega + nu Lambda^{2 alpha} omega = 0`
/// with `u` recovered from `omega` by Biot-Savart.
pub fn step_vorticity(omega: &ScalarField, dt: f64, params: &FractionalParams) -> Result<ScalarField> {
    check_dt(dt)?;
    let c = EtdCoeffs::new(&omega.grid, dt, params);
    let rhs = |w: &ScalarField| -> Result<Spectrum> {
        Ok(advect_scalar(&biot_savart(w), w)?.scale(-1.0).to_spectrum())
    };
    let w0 = omega.to_spectrum();
    let n0 = rhs(omega)?;
    let mut ws = w0.clone();
    for i in 0..ws.data.len() {
        ws.data[i] = w0.data[i] * c.e[i] + n0.data[i] * (dt * c.p1[i]);
    }
    let n1 = rhs(&ws.to_field())?;
    for i in 0..ws.data.len() {
        ws.data[i] += (n1.data[i] - n0.data[i]) * (dt * c.p2[i]);
    }
    let out = ws.to_field();
    if !out.is_finite() {
        return Err(Error::BlowupDetected {
            t: dt,
            norm: f64::INFINITY,
            cap: f64::INFINITY,
        });
    }
    Ok(out)
}

/// Settings shared by the variable-density steppers.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Abort when `||u||_inf` exceeds this multiple of `||u_0||_inf`.
    pub blowup_factor: f64,
    pub pressure_tol: f64,
    pub pressure_max_iter: usize,
    pub interpolant: Interpolant,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            blowup_factor: 1e3,
            pressure_tol: 1e-13,
            pressure_max_iter: 200,
            interpolant: Interpolant::Bicubic,
        }
    }
}

/// Outcome of the variable-coefficient pressure iteration.
#[derive(Clone, Debug)]
pub struct PressureSolve {
    pub pi: ScalarField,
    pub iterations: usize,
    /// Ratios of successive increments.
    pub factors: Vec<f64>,
    /// `||div N|| / ||G||` for the resulting acceleration.
    pub residual: f64,
    /// The acceleration `-(u . grad) u + (1 - 1/rho) nu Lambda^{2a} u - grad pi / rho`.
    pub acceleration: VectorField2,
}

/// Acceleration and pressure for the momentum equation written as
/// `d_t u + nu Lambda^{2a} u = -(u . grad) u + b nu Lambda^{2a} u - (1 - b) grad pi`
/// with `b = 1 - 1/rho`. The pressure solves `div((1/rho) grad pi) = div(G)` by
/// `pi <- Delta^{-1} div(G + b grad pi)`, a contraction whenever `|b| < 1/2`.
fn acceleration(
    rho: &ScalarField,
    u: &VectorField2,
    params: &FractionalParams,
    opts: &SolverOptions,
) -> Result<PressureSolve> {
    rho.check_grid(&u.comp[0])?;
    let b = rho.map(|r| 1.0 - 1.0 / r);
    let constant = b.max_abs() == 0.0;
    let conv = advect_vector(u, u)?;
    let visc = {
        let mut s = vector_spectra(u);
        for c in s.iter_mut() {
            let g = c.grid.clone();
            for (idx, z) in c.data.iter_mut().enumerate() {
                let (k1, k2) = g.wavevector(idx);
                *z *= params.rate(k1 * k1 + k2 * k2);
            }
        }
        vector_from_spectra(&s)
    };
    let g_field = if constant {
        conv.scale(-1.0)
    } else {
        dealias(&visc.mul_scalar(&b)?).sub(&conv)?
    };
    let div_g = divergence(&g_field);
    let mut pi = inverse_laplacian(&div_g);
    let mut factors = vec![];
    let mut iterations = 1;
    if !constant {
        let mut prev_inc = f64::NAN;
        let mut growth = 0;
        loop {
            let corr = dealias(&gradient(&pi).mul_scalar(&b)?);
            let next = inverse_laplacian(&divergence(&g_field.add(&corr)?));
            let inc = next.sub(&pi)?.l2_norm();
            let scale = next.l2_norm();
            pi = next;
            iterations += 1;
            if prev_inc.is_finite() && prev_inc > 0.0 {
                let f = inc / prev_inc;
                factors.push(f);
                growth = if f >= 1.0 { growth + 1 } else { 0 };
                if growth >= 2 {
                    return Err(Error::PressureIterationDiverged {
                        iterations,
                        factor: f,
                    });
                }
            }
            prev_inc = inc;
            if inc <= opts.pressure_tol * scale || scale == 0.0 {
                break;
            }
            if iterations >= opts.pressure_max_iter {
                return Err(Error::PressureIterationDiverged {
                    iterations,
                    factor: factors.last().copied().unwrap_or(f64::NAN),
                });
            }
        }
    }
    let grad_pi = gradient(&pi);
    let acc = if constant {
        g_field.sub(&grad_pi)?
    } else {
        g_field.sub(&grad_pi)?.add(&dealias(&grad_pi.mul_scalar(&b)?))?
    };
    let g_norm = g_field.l2_norm();
    let residual = if g_norm == 0.0 {
        0.0
    } else {
        divergence(&acc).l2_norm() / g_norm
    };
    Ok(PressureSolve {
        pi,
        iterations,
        factors,
        residual,
        acceleration: acc,
    })
}

/// Mean-free pressure of the variable-density momentum equation.
pub fn solve_pressure(rho: &ScalarField, u: &VectorField2, params: &FractionalParams) -> Result<PressureSolve> {
    solve_pressure_with(rho, u, params, &SolverOptions::default())
}

pub fn solve_pressure_with(
    rho: &ScalarField,
    u: &VectorField2,
    params: &FractionalParams,
    opts: &SolverOptions,
) -> Result<PressureSolve> {
    if rho.min() <= 0.0 {
        return Err(Error::NonPositiveDensity { t: f64::NAN, min: rho.min() });
    }
    acceleration(rho, u, params, opts)
}

/// Full state of a variable-density run with its constant-density reference.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField2,
    pub pi: ScalarField,
    pub ubar: VectorField2,
    pub pibar: ScalarField,
    pub params: FractionalParams,
    pub options: SolverOptions,
    /// Density at `t = 0`; the current density is its composition with the inverse flow.
    pub rho_initial: ScalarField,
    /// `X_t^{-1}(x) - x`, accumulated step by step.
    pub inverse_displacement: VectorField2,
    pub pressure_iters: usize,
    pub pressure_residual: f64,
    pub u0_linf: f64,
}

/// Perturbation of the variable-density run from the reference flow.
#[derive(Clone, Debug)]
pub struct PerturbationState {
    pub a: ScalarField,
    pub w: VectorField2,
    pub p: ScalarField,
}

impl SimState {
    /// Initial state: the velocity is dealiased and projected, both pressures solved.
    pub fn new(rho0: ScalarField, u0: &VectorField2, params: FractionalParams, options: SolverOptions) -> Result<Self> {
        rho0.check_grid(&u0.comp[0])?;
        if rho0.min() <= 0.0 {
            return Err(Error::NonPositiveDensity { t: 0.0, min: rho0.min() });
        }
        let u = leray_project(&dealias(u0));
        let ps = acceleration(&rho0, &u, &params, &options)?;
        let pibar = homogeneous_pressure(&u)?;
        let grid = rho0.grid.clone();
        Ok(Self {
            t: 0.0,
            rho: rho0.clone(),
            u0_linf: u.max_abs(),
            ubar: u.clone(),
            u,
            pi: ps.pi,
            pibar,
            params,
            options,
            rho_initial: rho0,
            inverse_displacement: VectorField2::zeros(&grid),
            pressure_iters: ps.iterations,
            pressure_residual: ps.residual,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.rho.grid
    }

    pub fn perturbation(&self) -> Result<PerturbationState> {
        Ok(PerturbationState {
            a: self.rho.map(|r| r - 1.0),
            w: self.u.sub(&self.ubar)?,
            p: self.pi.sub(&self.pibar)?,
        })
    }

    /// `\int rho |u|^2`.
    pub fn weighted_energy(&self) -> Result<f64> {
        let e = self.u.comp[0].mul(&self.u.comp[0])?.add(&self.u.comp[1].mul(&self.u.comp[1])?)?;
        Ok(e.dot(&self.rho)?)
    }

    fn check_blowup(&self, u: &VectorField2, t: f64) -> Result<()> {
        finite_or_blowup(u, t)?;
        let cap = self.options.blowup_factor * self.u0_linf.max(f64::MIN_POSITIVE);
        let norm = u.max_abs();
        if norm > cap {
            return Err(Error::BlowupDetected { t, norm, cap });
        }
        Ok(())
    }

    /// Transport the density over `[t, t + dt]` with the velocity linear between
    /// `u_start` and `u_end`, by composing the accumulated inverse map.
    fn transported_density(&self, u_start: &VectorField2, u_end: &VectorField2, dt: f64) -> Result<(ScalarField, VectorField2)> {
        let series = VelocitySeries::new(vec![self.t, self.t + dt], vec![u_start.clone(), u_end.clone()])?;
        let h = self.grid().spacing();
        let speed = u_start.max_abs().max(u_end.max_abs());
        let substeps = ((speed * dt / (0.5 * h)).ceil() as usize).max(1);
        let step = backward_displacement(&series, self.t, self.t + dt, substeps)?;
        let acc = [
            compose_with(&self.inverse_displacement.comp[0], &step, Interpolant::Bicubic)?,
            compose_with(&self.inverse_displacement.comp[1], &step, Interpolant::Bicubic)?,
        ];
        let total = VectorField2::new(step.comp[0].add(&acc[0])?, step.comp[1].add(&acc[1])?)?;
        let rho = if self.rho_initial.min() == self.rho_initial.max() {
            self.rho_initial.clone()
        } else {
            compose_with(&self.rho_initial, &total, self.options.interpolant)?
        };
        if rho.min() <= 0.0 {
            return Err(Error::NonPositiveDensity { t: self.t + dt, min: rho.min() });
        }
        Ok((rho, total))
    }
}

fn axpy_spectra(out: &mut [Spectrum; 2], a: &[Spectrum; 2], ca: &[f64], b: &[Spectrum; 2], cb: &[f64], s: f64) {
    for k in 0..2 {
        for i in 0..out[k].data.len() {
            out[k].data[i] = a[k].data[i] * ca[i] + b[k].data[i] * (s * cb[i]);
        }
    }
}

/// One step of the variable-density system.
///
/// Predictor with the acceleration at `t`, density transport with the velocity
/// linear between `u(t)` and the predictor, corrector with the acceleration at
/// the predicted state, final Leray projection. The reference flow advances with
/// [`step_homogeneous`].
pub fn step_inhomogeneous(state: &SimState, dt: f64) -> Result<SimState> {
    check_dt(dt)?;
    let params = &state.params;
    let opts = &state.options;
    let c = EtdCoeffs::new(state.grid(), dt, params);
    let ps0 = acceleration(&state.rho, &state.u, params, opts)?;
    let u0 = vector_spectra(&state.u);
    let n0 = vector_spectra(&ps0.acceleration);
    let mut us = u0.clone();
    axpy_spectra(&mut us, &u0, &c.e, &n0, &c.p1, dt);
    let u_pred = vector_from_spectra(&us);
    state.check_blowup(&u_pred, state.t + dt)?;
    let (rho1, inv) = state.transported_density(&state.u, &u_pred, dt)?;
    let ps1 = acceleration(&rho1, &u_pred, params, opts)?;
    let n1 = vector_spectra(&ps1.acceleration);
    for k in 0..2 {
        for i in 0..us[k].data.len() {
            us[k].data[i] += (n1[k].data[i] - n0[k].data[i]) * (dt * c.p2[i]);
        }
    }
    leray_spectra(&mut us);
    let u1 = vector_from_spectra(&us);
    state.check_blowup(&u1, state.t + dt)?;
    let ubar1 = step_homogeneous(&state.ubar, dt, params)?;
    let ps = acceleration(&rho1, &u1, params, opts)?;
    Ok(SimState {
        t: state.t + dt,
        rho: rho1,
        u: u1,
        pi: ps.pi,
        pibar: homogeneous_pressure(&ubar1)?,
        ubar: ubar1,
        params: *params,
        options: opts.clone(),
        rho_initial: state.rho_initial.clone(),
        inverse_displacement: inv,
        pressure_iters: ps0.iterations.max(ps1.iterations).max(ps.iterations),
        pressure_residual: ps.residual,
        u0_linf: state.u0_linf,
    })
}

/// Convergence record of one Picard step.
#[derive(Clone, Debug)]
pub struct PicardReport {
    pub iterations: usize,
    /// `||w^{n+1}(t+dt) - w^n(t+dt)||_{L^2}` per sweep.
    pub increments: Vec<f64>,
    /// Ratios of successive increments.
    pub ratios: Vec<f64>,
}

impl PicardReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Right-hand side of the linearized perturbation equation at one time level:
/// `-u^n . grad w^n - a d_t w - a d_t ubar - a (u^{n-1} . grad w^n) - a (ubar . grad ubar) - (1 + a) (w^n . grad ubar)`.
#[allow(clippy::too_many_arguments)]
fn picard_rhs(
    a: &ScalarField,
    w: &VectorField2,
    ubar: &VectorField2,
    u_prev: &VectorField2,
    dwdt: &VectorField2,
    dubar_dt: &VectorField2,
) -> Result<VectorField2> {
    let u = ubar.add(w)?;
    let one_plus_a = a.map(|v| 1.0 + v);
    let adv = advect_vector(&u, w)?;
    let f1 = dealias(&dwdt.mul_scalar(a)?);
    let f2 = dealias(&dubar_dt.mul_scalar(a)?);
    let f3 = dealias(&advect_vector(u_prev, w)?.mul_scalar(a)?);
    let f4 = dealias(&advect_vector(ubar, ubar)?.mul_scalar(a)?);
    let f5 = dealias(&advect_vector(w, ubar)?.mul_scalar(&one_plus_a)?);
    let total = adv.add(&f1)?.add(&f2)?.add(&f3)?.add(&f4)?.add(&f5)?;
    Ok(total.scale(-1.0))
}

/// One step through the linearized iteration: transport `a^{n+1}` by `u^n`, then
/// solve the generalized Stokes problem for `w^{n+1}` with the forcing frozen at
/// iterate `n`, until successive `w` differ by less than `tol` (relative, `L^2`).
pub fn picard_iterate(state: &SimState, dt: f64, n_max: usize, tol: f64) -> Result<(SimState, PicardReport)> {
    check_dt(dt)?;
    let params = &state.params;
    let c = EtdCoeffs::new(state.grid(), dt, params);
    let ubar0 = &state.ubar;
    let ubar1 = step_homogeneous(ubar0, dt, params)?;
    let dubar = ubar1.sub(ubar0)?.scale(1.0 / dt);
    let a0 = state.rho.map(|r| r - 1.0);
    let w0 = state.u.sub(ubar0)?;
    let w0_hat = vector_spectra(&w0);

    let mut w_n = w0.clone();
    let mut a_n = a0.clone();
    let mut u_prev1 = ubar1.add(&w_n)?;
    let mut u_prev0 = state.u.clone();
    let mut increments = vec![];
    let mut ratios = vec![];
    for sweep in 1..=n_max {
        let u_n0 = state.u.clone();
        let u_n1 = ubar1.add(&w_n)?;
        let (rho_next, inv) = state.transported_density(&u_n0, &u_n1, dt)?;
        let dwdt = w_n.sub(&w0)?.scale(1.0 / dt);
        let r0 = picard_rhs(&a0, &w0, ubar0, &u_prev0, &dwdt, &dubar)?;
        let r1 = picard_rhs(&a_n, &w_n, &ubar1, &u_prev1, &dwdt, &dubar)?;
        let r0_hat = vector_spectra(&leray_project(&r0));
        let r1_hat = vector_spectra(&leray_project(&r1));
        let mut w_hat = w0_hat.clone();
        for k in 0..2 {
            for i in 0..w_hat[k].data.len() {
                w_hat[k].data[i] = w0_hat[k].data[i] * c.e[i]
                    + r0_hat[k].data[i] * (dt * (c.p1[i] - c.p2[i]))
                    + r1_hat[k].data[i] * (dt * c.p2[i]);
            }
        }
        let w_next = vector_from_spectra(&w_hat);
        state.check_blowup(&w_next, state.t + dt)?;
        let inc = w_next.sub(&w_n)?.l2_norm();
        if let Some(&prev) = increments.last() {
            if prev > 0.0 {
                ratios.push(inc / prev);
            }
        }
        increments.push(inc);
        u_prev0 = u_n0;
        u_prev1 = u_n1;
        a_n = rho_next.map(|r| r - 1.0);
        w_n = w_next;
        let scale = w_n.l2_norm().max(ubar1.l2_norm() * 1e-3);
        if inc <= tol * scale || inc == 0.0 {
            let rho1 = rho_next;
            let u1 = ubar1.add(&w_n)?;
            let ps = acceleration(&rho1, &u1, params, &state.options)?;
            let next = SimState {
                t: state.t + dt,
                rho: rho1,
                pi: ps.pi,
                pibar: homogeneous_pressure(&ubar1)?,
                u: u1,
                ubar: ubar1,
                params: *params,
                options: state.options.clone(),
                rho_initial: state.rho_initial.clone(),
                inverse_displacement: inv,
                pressure_iters: ps.iterations,
                pressure_residual: ps.residual,
                u0_linf: state.u0_linf,
            };
            return Ok((
                next,
                PicardReport {
                    iterations: sweep,
                    increments,
                    ratios,
                },
            ));
        }
    }
    Err(Error::PicardNotContracting {
        iterations: n_max,
        increment: increments.last().copied().unwrap_or(f64::NAN),
    })
}

/// Advance `steps` times with [`step_inhomogeneous`], calling `observe` after each.
pub fn run(
    state: SimState,
    dt: f64,
    steps: usize,
    mut observe: impl FnMut(&SimState) -> Result<()>,
) -> Result<SimState> {
    let mut s = state;
    for _ in 0..steps {
        s = step_inhomogeneous(&s, dt)?;
        observe(&s)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use crate::spectral::{curl, divergence_norm, heat_semigroup};
    use std::f64::consts::PI;

    fn params() -> FractionalParams {
        FractionalParams::for_solver(0.75, 1.0).unwrap()
    }

    #[test]
    fn tiny_amplitude_is_pure_decay() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let u = VectorField2::from_fn(&g, |_, y| (1e-8 * (2.0 * y).sin(), 0.0));
        let out = step_homogeneous(&u, 0.01, &params()).unwrap();
        let exact = heat_semigroup(&u, 0.01, &params()).unwrap();
        assert!(out.sub(&exact).unwrap().l2_norm() < 1e-10 * exact.l2_norm());
    }

    #[test]
    fn zero_vorticity_stays_zero() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let w = ScalarField::zeros(&g);
        assert_eq!(step_vorticity(&w, 0.1, &params()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn vorticity_and_velocity_steps_agree() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let u0 = dealias(&sample::divergence_free(&g, 1.0, 4.0, 0.5, &mut sample::rng(3)));
        let mut u = u0.clone();
        let mut w = curl(&u0);
        for _ in 0..10 {
            u = step_homogeneous(&u, 0.01, &params()).unwrap();
            w = step_vorticity(&w, 0.01, &params()).unwrap();
        }
        let err = curl(&u).sub(&w).unwrap().l2_norm() / w.l2_norm();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn constant_density_pressure_matches_homogeneous() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let u = dealias(&sample::divergence_free(&g, 1.0, 5.0, 1.0, &mut sample::rng(5)));
        let rho = ScalarField::constant(&g, 1.0);
        let ps = solve_pressure(&rho, &u, &params()).unwrap();
        assert_eq!(ps.iterations, 1);
        let oracle = homogeneous_pressure(&u).unwrap();
        assert!(ps.pi.sub(&oracle).unwrap().l2_norm() < 1e-12 * oracle.l2_norm());
        let zero = solve_pressure(&rho, &VectorField2::zeros(&g), &params()).unwrap();
        assert_eq!(zero.pi.max_abs(), 0.0);
    }

    #[test]
    fn pressure_contracts_for_small_density_jumps() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let u = dealias(&sample::divergence_free(&g, 1.0, 5.0, 1.0, &mut sample::rng(6)));
        let rho = ScalarField::from_fn(&g, |x, _| 1.0 + 0.05 * x.cos());
        let ps = solve_pressure(&rho, &u, &params()).unwrap();
        assert!(ps.iterations <= 12, "{}", ps.iterations);
        let bound = 0.05 / 0.95;
        assert!(ps.factors.iter().all(|f| *f < bound * 1.5), "{:?}", ps.factors);
        assert!(ps.residual < 1e-9);
    }

    #[test]
    fn inhomogeneous_step_reduces_to_homogeneous() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let u0 = sample::divergence_free(&g, 1.0, 4.0, 0.5, &mut sample::rng(9));
        let rho = ScalarField::constant(&g, 1.0);
        let mut s = SimState::new(rho, &u0, params(), SolverOptions::default()).unwrap();
        for _ in 0..5 {
            let prev = s.u.clone();
            s = step_inhomogeneous(&s, 0.01).unwrap();
            let hom = step_homogeneous(&prev, 0.01, &params()).unwrap();
            assert!(s.u.sub(&hom).unwrap().l2_norm() < 1e-10 * hom.l2_norm());
            assert!(divergence_norm(&s.u) < 1e-10 * s.u.l2_norm());
        }
    }

    #[test]
    fn picard_with_constant_density_converges_at_once() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let u0 = sample::divergence_free(&g, 1.0, 4.0, 0.5, &mut sample::rng(9));
        let s = SimState::new(ScalarField::constant(&g, 1.0), &u0, params(), SolverOptions::default()).unwrap();
        let (next, rep) = picard_iterate(&s, 0.01, 10, 1e-10).unwrap();
        assert_eq!(rep.iterations, 1);
        let hom = step_homogeneous(&s.u, 0.01, &params()).unwrap();
        assert!(next.u.sub(&hom).unwrap().l2_norm() < 1e-12 * hom.l2_norm());
    }

    #[test]
    fn blowup_cap_is_enforced() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let u0 = sample::divergence_free(&g, 1.0, 3.0, 0.5, &mut sample::rng(2));
        let opts = SolverOptions {
            blowup_factor: 0.5,
            ..SolverOptions::default()
        };
        let s = SimState::new(ScalarField::constant(&g, 1.0), &u0, params(), opts).unwrap();
        assert!(matches!(step_inhomogeneous(&s, 0.01), Err(Error::BlowupDetected { .. })));
    }
}
