//! Particle trajectories, their inverses and deformation gradients, and
//! transport of fields along them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField2};
use crate::grid::Grid2D;
use crate::interp::{self, Interpolant};
use crate::sample;
use crate::spectral::velocity_gradient;

/// 2x2 matrix stored row-major `[a11, a12, a21, a22]`.
pub type Mat2 = [f64; 4];

pub const IDENTITY: Mat2 = [1.0, 0.0, 0.0, 1.0];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub fn mat_det(a: &Mat2) -> f64 {
    a[0] * a[3] - a[1] * a[2]
}

pub fn mat_inv(a: &Mat2) -> Mat2 {
    let d = mat_det(a);
    [a[3] / d, -a[1] / d, -a[2] / d, a[0] / d]
}

pub fn mat_transpose(a: &Mat2) -> Mat2 {
    [a[0], a[2], a[1], a[3]]
}

/// Spectral (operator 2-) norm.
pub fn mat_norm(a: &Mat2) -> f64 {
    let p = a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3];
    let d = mat_det(a);
    let disc = (p * p - 4.0 * d * d).max(0.0).sqrt();
    (0.5 * (p + disc)).sqrt()
}

pub fn mat_frobenius(a: &Mat2) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt()
}

fn mat_field_at(m: &[ScalarField; 4], idx: usize) -> Mat2 {
    [m[0].data[idx], m[1].data[idx], m[2].data[idx], m[3].data[idx]]
}

fn mat_field_from(grid: &Grid2D, vals: &[Mat2]) -> [ScalarField; 4] {
    let mk = |c: usize| ScalarField {
        grid: grid.clone(),
        data: vals.iter().map(|m| m[c]).collect(),
    };
    [mk(0), mk(1), mk(2), mk(3)]
}

/// Largest pointwise operator norm of a matrix field.
pub fn matrix_linf(m: &[ScalarField; 4]) -> f64 {
    (0..m[0].data.len())
        .map(|i| mat_norm(&mat_field_at(m, i)))
        .fold(0.0, f64::max)
}

/// Velocity samples at increasing times, taken linear in time between samples.
#[derive(Clone, Debug)]
pub struct VelocitySeries {
    pub times: Vec<f64>,
    pub fields: Vec<VectorField2>,
    grads: Vec<[ScalarField; 4]>,
}

impl VelocitySeries {
    pub fn new(times: Vec<f64>, fields: Vec<VectorField2>) -> Result<Self> {
        if times.len() < 2 || fields.len() != times.len() {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: times.len().min(fields.len()),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sample times must increase".into()));
        }
        for f in &fields[1..] {
            f.check_grid(&fields[0])?;
        }
        let grads = fields.iter().map(velocity_gradient).collect();
        Ok(Self { times, fields, grads })
    }

    /// Time-independent velocity on `[t0, t1]`.
    pub fn steady(u: VectorField2, t0: f64, t1: f64) -> Result<Self> {
        Self::new(vec![t0, t1], vec![u.clone(), u])
    }

    pub fn grid(&self) -> &Grid2D {
        self.fields[0].grid()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let m = self.times.len();
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p if p >= m => m - 2,
            p => p - 1,
        };
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, w.clamp(0.0, 1.0))
    }

    pub fn velocity_at(&self, t: f64, x1: f64, x2: f64) -> (f64, f64) {
        let (k, w) = self.locate(t);
        let a = &self.fields[k];
        let b = &self.fields[k + 1];
        let v = |f: &VectorField2, c: usize| interp::bicubic(&f.comp[c], x1, x2);
        (
            (1.0 - w) * v(a, 0) + w * v(b, 0),
            (1.0 - w) * v(a, 1) + w * v(b, 1),
        )
    }

    pub fn gradient_at(&self, t: f64, x1: f64, x2: f64) -> Mat2 {
        let (k, w) = self.locate(t);
        let g = |m: &[ScalarField; 4], c: usize| interp::bicubic(&m[c], x1, x2);
        let a = &self.grads[k];
        let b = &self.grads[k + 1];
        [0, 1, 2, 3].map(|c| (1.0 - w) * g(a, c) + w * g(b, c))
    }

    pub fn gradients(&self) -> &[[ScalarField; 4]] {
        &self.grads
    }

    pub fn max_speed(&self) -> f64 {
        self.fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    /// `\int_{t0}^{t1} g(t) dt` for the piecewise-linear interpolant of per-sample values.
    pub fn integrate_samples(&self, vals: &[f64], t0: f64, t1: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.times.len() - 1 {
            let (a, b) = (self.times[k], self.times[k + 1]);
            let lo = a.max(t0);
            let hi = b.min(t1);
            if hi <= lo {
                continue;
            }
            let at = |t: f64| vals[k] + (vals[k + 1] - vals[k]) * (t - a) / (b - a);
            total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
        }
        total
    }

    /// `\int ||grad u||_inf dt` over `[t0, t1]`.
    pub fn gradient_linf_integral(&self, t0: f64, t1: f64) -> f64 {
        let vals: Vec<f64> = self.grads.iter().map(matrix_linf).collect();
        self.integrate_samples(&vals, t0, t1)
    }

    /// `\int [grad u]_{C^gamma} dt` over `[t0, t1]`.
    pub fn gradient_holder_integral(&self, gamma: f64, t0: f64, t1: f64) -> f64 {
        let vals: Vec<f64> = self.grads.iter().map(|m| holder_seminorm(m, gamma)).collect();
        self.integrate_samples(&vals, t0, t1)
    }

    pub fn check_cover(&self, t0: f64, t1: f64) -> Result<()> {
        let eps = 1e-12 * (1.0 + t0.abs().max(t1.abs()));
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        if lo < self.start() - eps || hi > self.end() + eps {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.times.len(),
            });
        }
        Ok(())
    }
}

/// Forward map `X`, optionally its inverse, and both deformation gradients.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub grid: Grid2D,
    pub t0: f64,
    pub t1: f64,
    pub substeps: usize,
    /// `X(y) - y`, periodic in `y`.
    pub displacement: VectorField2,
    /// `grad X`.
    pub gradient: [ScalarField; 4],
    /// `X^{-1}(x) - x`.
    pub inverse_displacement: Option<VectorField2>,
    pub inverse_gradient: Option<[ScalarField; 4]>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl FlowMap {
    pub fn identity(grid: &Grid2D, t: f64) -> Self {
        let z = VectorField2::zeros(grid);
        let id = mat_field_from(grid, &vec![IDENTITY; grid.len()]);
        Self {
            grid: grid.clone(),
            t0: t,
            t1: t,
            substeps: 0,
            displacement: z.clone(),
            gradient: id.clone(),
            inverse_displacement: Some(z),
            inverse_gradient: Some(id),
            warnings: vec![],
        }
    }

    /// Image of the grid node `idx` (not wrapped into the box).
    pub fn image(&self, idx: usize) -> (f64, f64) {
        let (y1, y2) = self.grid.point(idx);
        (
            y1 + self.displacement.comp[0].data[idx],
            y2 + self.displacement.comp[1].data[idx],
        )
    }

    /// Forward map at an arbitrary point by interpolating the displacement.
    pub fn forward_at(&self, y1: f64, y2: f64) -> (f64, f64) {
        (
            y1 + interp::bicubic(&self.displacement.comp[0], y1, y2),
            y2 + interp::bicubic(&self.displacement.comp[1], y1, y2),
        )
    }

    pub fn inverse_at(&self, x1: f64, x2: f64) -> Result<(f64, f64)> {
        let d = self.inverse()?;
        Ok((
            x1 + interp::bicubic(&d.comp[0], x1, x2),
            x2 + interp::bicubic(&d.comp[1], x1, x2),
        ))
    }

    fn inverse(&self) -> Result<&VectorField2> {
        self.inverse_displacement
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("flow map has no inverse; call invert_flow".into()))
    }

    pub fn gradient_at(&self, idx: usize) -> Mat2 {
        mat_field_at(&self.gradient, idx)
    }
}

pub fn auto_substeps(series: &VelocitySeries, t0: f64, t1: f64) -> usize {
    let h = series.grid().spacing();
    let s = series.max_speed() * (t1 - t0).abs() / (0.5 * h);
    (s.ceil() as usize).max(1)
}

struct Trajectories {
    displacement: VectorField2,
    gradient: [ScalarField; 4],
}

/// RK4 for `dX/ds = sign u(t(s), X)`, `dF/ds = sign grad u(t(s), X) F` from every node.
fn trajectories(series: &VelocitySeries, t_start: f64, t_end: f64, substeps: usize) -> Trajectories {
    let grid = series.grid().clone();
    let dt = (t_end - t_start) / substeps as f64;
    let rhs = |t: f64, x: (f64, f64), f: &Mat2| -> ((f64, f64), Mat2) {
        let v = series.velocity_at(t, x.0, x.1);
        let g = series.gradient_at(t, x.0, x.1);
        (v, mat_mul(&g, f))
    };
    let out: Vec<((f64, f64), Mat2)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let y = grid.point(idx);
            let mut x = y;
            let mut f = IDENTITY;
            for step in 0..substeps {
                let t = t_start + step as f64 * dt;
                let add = |x: (f64, f64), f: &Mat2, k: &((f64, f64), Mat2), c: f64| {
                    let xx = (x.0 + c * k.0 .0, x.1 + c * k.0 .1);
                    let ff = [0, 1, 2, 3].map(|i| f[i] + c * k.1[i]);
                    (xx, ff)
                };
                let k1 = rhs(t, x, &f);
                let (x2, f2) = add(x, &f, &k1, 0.5 * dt);
                let k2 = rhs(t + 0.5 * dt, x2, &f2);
                let (x3, f3) = add(x, &f, &k2, 0.5 * dt);
                let k3 = rhs(t + 0.5 * dt, x3, &f3);
                let (x4, f4) = add(x, &f, &k3, dt);
                let k4 = rhs(t + dt, x4, &f4);
                x.0 += dt / 6.0 * (k1.0 .0 + 2.0 * k2.0 .0 + 2.0 * k3.0 .0 + k4.0 .0);
                x.1 += dt / 6.0 * (k1.0 .1 + 2.0 * k2.0 .1 + 2.0 * k3.0 .1 + k4.0 .1);
                for i in 0..4 {
                    f[i] += dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
                }
            }
            ((x.0 - y.0, x.1 - y.1), f)
        })
        .collect();
    let d1 = out.iter().map(|o| o.0 .0).collect();
    let d2 = out.iter().map(|o| o.0 .1).collect();
    let mats: Vec<Mat2> = out.iter().map(|o| o.1).collect();
    Trajectories {
        displacement: VectorField2 {
            comp: [
                ScalarField { grid: grid.clone(), data: d1 },
                ScalarField { grid: grid.clone(), data: d2 },
            ],
        },
        gradient: mat_field_from(&grid, &mats),
    }
}

/// RK4 trajectories of arbitrary points through `velocity` over `[t0, t1]`.
pub fn advect_points(
    points: &[(f64, f64)],
    velocity: impl Fn(f64, f64, f64) -> (f64, f64) + Sync,
    t0: f64,
    t1: f64,
    substeps: usize,
) -> Vec<(f64, f64)> {
    let substeps = substeps.max(1);
    let dt = (t1 - t0) / substeps as f64;
    points
        .par_iter()
        .map(|&(x1, x2)| {
            let mut x = (x1, x2);
            for k in 0..substeps {
                let t = t0 + k as f64 * dt;
                let k1 = velocity(t, x.0, x.1);
                let k2 = velocity(t + 0.5 * dt, x.0 + 0.5 * dt * k1.0, x.1 + 0.5 * dt * k1.1);
                let k3 = velocity(t + 0.5 * dt, x.0 + 0.5 * dt * k2.0, x.1 + 0.5 * dt * k2.1);
                let k4 = velocity(t + dt, x.0 + dt * k3.0, x.1 + dt * k3.1);
                x.0 += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                x.1 += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
            x
        })
        .collect()
}

/// Forward trajectories from `t0` to `t1` (RK4, bicubic velocity interpolation).
pub fn integrate_flow(series: &VelocitySeries, t0: f64, t1: f64, substeps: usize) -> Result<FlowMap> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be at least 1".into()));
    }
    series.check_cover(t0, t1)?;
    let mut warnings = vec![];
    let dt = (t1 - t0).abs() / substeps as f64;
    let h = series.grid().spacing();
    if series.max_speed() * dt > h {
        warnings.push(format!(
            "CFL: max|u| dt = {:.3e} exceeds the grid spacing {:.3e}",
            series.max_speed() * dt,
            h
        ));
    }
    let tr = trajectories(series, t0, t1, substeps);
    Ok(FlowMap {
        grid: series.grid().clone(),
        t0,
        t1,
        substeps,
        displacement: tr.displacement,
        gradient: tr.gradient,
        inverse_displacement: None,
        inverse_gradient: None,
        warnings,
    })
}

/// Fill the inverse map by integrating the characteristics backward from `t1` to `t0`.
pub fn invert_flow(fm: &FlowMap, series: &VelocitySeries) -> Result<FlowMap> {
    series.check_cover(fm.t0, fm.t1)?;
    let mut out = fm.clone();
    if fm.substeps == 0 {
        return Ok(out);
    }
    let tr = trajectories(series, fm.t1, fm.t0, fm.substeps);
    out.inverse_displacement = Some(tr.displacement);
    out.inverse_gradient = Some(tr.gradient);
    Ok(out)
}

/// Displacement of the backward characteristics `x -> X_{t0} (X_{t1})^{-1} (x) - x`.
pub fn backward_displacement(series: &VelocitySeries, t0: f64, t1: f64, substeps: usize) -> Result<VectorField2> {
    series.check_cover(t0, t1)?;
    Ok(trajectories(series, t1, t0, substeps.max(1)).displacement)
}

/// Result of the Neumann-series inversion of `grad X = Id + B`.
#[derive(Clone, Debug)]
pub struct JacobianField {
    pub a: [ScalarField; 4],
    pub b: [ScalarField; 4],
    /// `\int ||grad u||_inf dt` over the flow interval.
    pub regime_integral: f64,
    pub b_linf: f64,
    /// `||B||^{K+1} / (1 - ||B||)`.
    pub truncation_bound: f64,
}

impl JacobianField {
    pub fn a_at(&self, idx: usize) -> Mat2 {
        mat_field_at(&self.a, idx)
    }

    pub fn b_at(&self, idx: usize) -> Mat2 {
        mat_field_at(&self.b, idx)
    }
}

/// `A = sum_{k=0}^{K} (-B)^k` with `B = grad X - Id`.
pub fn neumann_inverse(b: &Mat2, k_terms: usize) -> Mat2 {
    let nb = b.map(|v| -v);
    let mut term = IDENTITY;
    let mut sum = IDENTITY;
    for _ in 0..k_terms {
        term = mat_mul(&term, &nb);
        for i in 0..4 {
            sum[i] += term[i];
        }
    }
    sum
}

pub fn jacobian_neumann(fm: &FlowMap, series: &VelocitySeries, k_terms: usize) -> Result<JacobianField> {
    if k_terms == 0 {
        return Err(Error::InvalidParameter("need at least one Neumann term".into()));
    }
    let regime = series.gradient_linf_integral(fm.t0.min(fm.t1), fm.t0.max(fm.t1));
    if regime > 0.5 {
        return Err(Error::OutsideNeumannRegime(regime));
    }
    let n = fm.grid.len();
    let bs: Vec<Mat2> = (0..n)
        .map(|i| {
            let f = fm.gradient_at(i);
            [f[0] - 1.0, f[1], f[2], f[3] - 1.0]
        })
        .collect();
    let a: Vec<Mat2> = bs.iter().map(|b| neumann_inverse(b, k_terms)).collect();
    let b_linf = bs.iter().map(mat_norm).fold(0.0, f64::max);
    let truncation_bound = if b_linf < 1.0 {
        b_linf.powi(k_terms as i32 + 1) / (1.0 - b_linf)
    } else {
        f64::INFINITY
    };
    Ok(JacobianField {
        a: mat_field_from(&fm.grid, &a),
        b: mat_field_from(&fm.grid, &bs),
        regime_integral: regime,
        b_linf,
        truncation_bound,
    })
}

/// `grad X` from fourth-order central differences of the displacement.
pub fn fd_deformation_gradient(fm: &FlowMap) -> [ScalarField; 4] {
    let g = &fm.grid;
    let n = g.n();
    let h = g.spacing();
    let d = |c: usize, axis: usize, idx: usize| -> f64 {
        let f = &fm.displacement.comp[c].data;
        let (i, j) = (idx / n, idx % n);
        let at = |o: i64| -> f64 {
            let (ii, jj) = if axis == 0 {
                (((i as i64 + o).rem_euclid(n as i64)) as usize, j)
            } else {
                (i, ((j as i64 + o).rem_euclid(n as i64)) as usize)
            };
            f[ii * n + jj]
        };
        (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
    };
    let vals: Vec<Mat2> = (0..g.len())
        .map(|idx| {
            [
                1.0 + d(0, 0, idx),
                d(0, 1, idx),
                d(1, 0, idx),
                1.0 + d(1, 1, idx),
            ]
        })
        .collect();
    mat_field_from(g, &vals)
}

/// `max |det grad X - 1|` with the finite-difference gradient.
pub fn measure_defect(fm: &FlowMap) -> f64 {
    let m = fd_deformation_gradient(fm);
    (0..fm.grid.len())
        .map(|i| (mat_det(&mat_field_at(&m, i)) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `max_y |X^{-1}(X(y)) - y|` (minimal image).
pub fn composition_error(fm: &FlowMap) -> Result<f64> {
    let inv = fm.inverse()?;
    let g = &fm.grid;
    Ok((0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (y1, y2) = g.point(idx);
            let (x1, x2) = fm.image(idx);
            let z1 = x1 + interp::bicubic(&inv.comp[0], x1, x2);
            let z2 = x2 + interp::bicubic(&inv.comp[1], x1, x2);
            g.wrap_delta(z1 - y1).hypot(g.wrap_delta(z2 - y2))
        })
        .reduce(|| 0.0, f64::max))
}

/// `rho_0 o X^{-1}` sampled on the grid.
pub fn transport_density(rho0: &ScalarField, fm: &FlowMap, kind: Interpolant) -> Result<ScalarField> {
    compose_with(rho0, fm.inverse()?, kind)
}

/// `f o X` or `f o X^{-1}` with the bicubic interpolant.
pub fn compose_field(f: &ScalarField, fm: &FlowMap, direction: Direction) -> Result<ScalarField> {
    match direction {
        Direction::Forward => compose_with(f, &fm.displacement, Interpolant::Bicubic),
        Direction::Inverse => compose_with(f, fm.inverse()?, Interpolant::Bicubic),
    }
}

/// Samples `f(x + d(x))` at every node.
pub fn compose_with(f: &ScalarField, d: &VectorField2, kind: Interpolant) -> Result<ScalarField> {
    f.check_grid(&d.comp[0])?;
    let g = &f.grid;
    let data = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (x1, x2) = g.point(idx);
            interp::sample(f, x1 + d.comp[0].data[idx], x2 + d.comp[1].data[idx], kind)
        })
        .collect();
    Ok(ScalarField { grid: g.clone(), data })
}

/// Extremes of `|X(y) - X(z)| / |y - z|` over random and nearest-neighbour pairs.
pub fn bi_lipschitz_ratios(fm: &FlowMap, random_pairs: usize, seed: u64) -> (f64, f64) {
    let g = &fm.grid;
    let n = g.n();
    let mut rng = sample::rng(seed);
    let mut pairs: Vec<(usize, usize)> = (0..random_pairs)
        .map(|_| loop {
            let a = rng.gen_range(0..g.len());
            let b = rng.gen_range(0..g.len());
            if a != b {
                break (a, b);
            }
        })
        .collect();
    for idx in 0..g.len() {
        let (i, j) = (idx / n, idx % n);
        pairs.push((idx, ((i + 1) % n) * n + j));
        pairs.push((idx, i * n + (j + 1) % n));
    }
    let ratio = |&(a, b): &(usize, usize)| -> f64 {
        let (ya, yb) = (g.point(a), g.point(b));
        let dy = (g.wrap_delta(ya.0 - yb.0), g.wrap_delta(ya.1 - yb.1));
        let dd = (
            fm.displacement.comp[0].data[a] - fm.displacement.comp[0].data[b],
            fm.displacement.comp[1].data[a] - fm.displacement.comp[1].data[b],
        );
        g.wrap_delta(dy.0 + dd.0).hypot(g.wrap_delta(dy.1 + dd.1)) / dy.0.hypot(dy.1)
    };
    pairs
        .par_iter()
        .map(|p| {
            let r = ratio(p);
            (r, r)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

/// Sampled `sup |M(y) - M(z)|_F / |y - z|^gamma` over dyadic separations along
/// the axes and diagonals.
pub fn holder_seminorm(m: &[ScalarField; 4], gamma: f64) -> f64 {
    let g = &m[0].grid;
    let n = g.n();
    let h = g.spacing();
    let mut seps = vec![];
    let mut s = 1usize;
    while s <= n / 2 {
        for &(a, b) in &[(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
            seps.push((a * s as i64, b * s as i64));
        }
        s *= 2;
    }
    seps.par_iter()
        .map(|&(a, b)| {
            let dist = h * ((a * a + b * b) as f64).sqrt();
            let w = dist.powf(gamma);
            let mut best = 0.0f64;
            for idx in 0..g.len() {
                let (i, j) = ((idx / n) as i64, (idx % n) as i64);
                let o = (((i + a).rem_euclid(n as i64)) * n as i64 + (j + b).rem_euclid(n as i64)) as usize;
                let d = [0, 1, 2, 3].map(|c| m[c].data[o] - m[c].data[idx]);
                best = best.max(mat_frobenius(&d) / w);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

pub fn holder_gradient_norm(fm: &FlowMap, gamma: f64, direction: Direction) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    match direction {
        Direction::Forward => Ok(holder_seminorm(&fm.gradient, gamma)),
        Direction::Inverse => fm
            .inverse_gradient
            .as_ref()
            .map(|m| holder_seminorm(m, gamma))
            .ok_or_else(|| Error::InvalidParameter("flow map has no inverse".into())),
    }
}

/// Gronwall envelope `||grad X||_inf^{1+gamma} ||grad u||_{L^1 C^gamma} e^{||grad u||_{L^1 L^inf}}`
/// for the Hoelder seminorm of `grad X^{+-1}`.
pub fn holder_envelope(fm: &FlowMap, series: &VelocitySeries, gamma: f64, direction: Direction) -> Result<f64> {
    let (t0, t1) = (fm.t0.min(fm.t1), fm.t0.max(fm.t1));
    let grad = match direction {
        Direction::Forward => &fm.gradient,
        Direction::Inverse => fm
            .inverse_gradient
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("flow map has no inverse".into()))?,
    };
    let gx = matrix_linf(grad);
    let hol = series.gradient_holder_integral(gamma, t0, t1);
    let lip = series.gradient_linf_integral(t0, t1);
    Ok(gx.powf(1.0 + gamma) * hol * lip.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation_series(g: &Grid2D, t1: f64) -> VelocitySeries {
        let c = 0.5 * g.box_length();
        let u = VectorField2::from_fn(g, |x, y| (-(y - c), x - c));
        VelocitySeries::steady(u, 0.0, t1).unwrap()
    }

    #[test]
    fn constant_advection() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let u = VectorField2::from_fn(&g, |_, _| (1.0, 0.0));
        let s = VelocitySeries::steady(u, 0.0, 0.3).unwrap();
        let fm = integrate_flow(&s, 0.0, 0.3, 3).unwrap();
        assert!(fm.displacement.comp[0].data.iter().all(|d| (d - 0.3).abs() < 1e-14));
        assert!(fm.displacement.comp[1].max_abs() < 1e-14);
    }

    #[test]
    fn rigid_rotation_near_the_centre() {
        let g = Grid2D::new(32, 16.0).unwrap();
        let s = rotation_series(&g, 1.0);
        let fm = integrate_flow(&s, 0.0, 1.0, 200).unwrap();
        let idx = g.index(18, 16); // centre + (1, 0)
        let (x1, x2) = fm.image(idx);
        assert!((x1 - 8.0 - 1f64.cos()).abs() < 1e-10, "{x1}");
        assert!((x2 - 8.0 - 1f64.sin()).abs() < 1e-10);
        let fm = invert_flow(&fm, &s).unwrap();
        let d = fm.inverse_displacement.as_ref().unwrap();
        let y1 = 9.0 + d.comp[0].data[idx];
        let y2 = 8.0 + d.comp[1].data[idx];
        assert!((y1 - 8.0 - 1f64.cos()).abs() < 1e-10);
        assert!((y2 - 8.0 + 1f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn shear_jacobian_is_nilpotent_and_exact() {
        // u = (c sin(k x2), 0): grad u is strictly upper triangular everywhere.
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let c = 0.1;
        let u = VectorField2::from_fn(&g, |_, y| (c * y.sin(), 0.0));
        let s = VelocitySeries::steady(u, 0.0, 1.0).unwrap();
        let fm = integrate_flow(&s, 0.0, 1.0, 20).unwrap();
        let jac = jacobian_neumann(&fm, &s, 1).unwrap();
        let jac5 = jacobian_neumann(&fm, &s, 5).unwrap();
        for idx in 0..g.len() {
            let (_, y) = g.point(idx);
            let b = jac.b_at(idx);
            assert!((b[1] - c * y.cos()).abs() < 1e-10);
            assert!(b[0].abs() < 1e-14 && b[2].abs() < 1e-14 && b[3].abs() < 1e-14);
            let a = jac.a_at(idx);
            let a5 = jac5.a_at(idx);
            assert!((a[1] + b[1]).abs() < 1e-14);
            assert!((0..4).all(|i| (a[i] - a5[i]).abs() < 1e-15));
        }
    }

    #[test]
    fn neumann_rejects_large_gradients() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let u = VectorField2::from_fn(&g, |_, y| (2.0 * y.sin(), 0.0));
        let s = VelocitySeries::steady(u, 0.0, 1.0).unwrap();
        let fm = integrate_flow(&s, 0.0, 1.0, 10).unwrap();
        assert!(matches!(jacobian_neumann(&fm, &s, 3), Err(Error::OutsideNeumannRegime(_))));
    }

    #[test]
    fn whole_cell_translation_is_exact() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let h = g.spacing();
        let u = VectorField2::from_fn(&g, |_, _| (h, 0.0));
        let s = VelocitySeries::steady(u, 0.0, 1.0).unwrap();
        let fm = invert_flow(&integrate_flow(&s, 0.0, 1.0, 4).unwrap(), &s).unwrap();
        let rho = ScalarField::from_fn(&g, |x, y| if x < 2.0 && y < 3.0 { 1.2 } else { 1.0 });
        for kind in [Interpolant::Bicubic, Interpolant::BilinearClamped] {
            let out = transport_density(&rho, &fm, kind).unwrap();
            for i in 0..16 {
                for j in 0..16 {
                    assert!((out.at(i, j) - rho.at((i + 15) % 16, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_flow_has_zero_holder_norm() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let fm = FlowMap::identity(&g, 0.0);
        assert_eq!(holder_gradient_norm(&fm, 0.5, Direction::Forward).unwrap(), 0.0);
        assert_eq!(composition_error(&fm).unwrap(), 0.0);
        let (lo, hi) = bi_lipschitz_ratios(&fm, 100, 1);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_norm_of_shear() {
        let t: f64 = 0.7;
        let m = [1.0, t, 0.0, 1.0];
        let exact = 0.5 * (t + (t * t + 4.0).sqrt());
        assert!((mat_norm(&m) - exact).abs() < 1e-14);
    }
}
