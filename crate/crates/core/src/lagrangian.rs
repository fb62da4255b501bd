//! Principal-value quadrature of the fractional operators in Eulerian and
//! Lagrangian coordinates, and the right-hand sides of the difference system of
//! two Lagrangian solutions.
//!
//! Every PV integral here has the form
//! `I(y) = p.v. \int K(X(y) - X(z)) . N(y, z) dz` over one periodic cell, where
//! `K(e) = sum_n (e + nL) / |e + nL|^{2+2a}` is the periodized kernel and `N`
//! vanishes at `z = y`. The quadrature is the punctured lattice sum over all grid
//! nodes plus a singular correction: the leading even part of the integrand near
//! `z = y` is a quadratic (and optionally quartic) form divided by `|F d|^{2+2a}`,
//! and the difference between its integral and its lattice sum is computed once
//! per Jacobian `F` against a smooth radial cutoff.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField2};
use crate::flow::{bi_lipschitz_ratios, mat_det, mat_inv, mat_mul, FlowMap, Mat2, IDENTITY};
use crate::grid::Grid2D;
use crate::kernel::planar_dissipation_constant;
use crate::quadrature::{adaptive, gauss_legendre};
use crate::spectral::{divergence, evaluate_at, fractional_laplacian, gradient, mixed_partial, partial};

/// Images summed explicitly in each direction; the rest is an analytic tail.
const IMAGE_SHELLS: i64 = 8;
/// Cutoff radius (in grid spacings) of the singular correction.
const CUTOFF_SCALE: f64 = 8.0;
const ANGLES: usize = 256;
/// Image table nodes per grid spacing.
const TABLE_REFINE: i64 = 2;
/// Bi-Lipschitz window for the change of variables.
pub const WINDOW: (f64, f64) = (0.75, 4.0 / 3.0);

fn cutoff(r: f64) -> f64 {
    crate::besov::chi(r / CUTOFF_SCALE)
}

/// Periodized kernel `e / |e|^q` with `q = 2 + 2 alpha`, split into the nearest
/// image and the smooth sum over all other images.
#[derive(Clone, Debug)]
pub struct PeriodicKernel {
    pub grid: Grid2D,
    pub alpha: f64,
    q: f64,
    /// Image part on the displacements `(a h, b h) / TABLE_REFINE`, `|a|, |b| <= n + 4`.
    images: [Vec<f64>; 2],
    side: usize,
    offset: i64,
    radial: [f64; 2],
    lattice: Vec<(f64, f64, f64)>,
}

impl PeriodicKernel {
    pub fn new(grid: &Grid2D, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidExponent(alpha));
        }
        let q = 2.0 + 2.0 * alpha;
        let n = grid.n() as i64;
        let h = grid.spacing();
        let l = grid.box_length();
        let offset = TABLE_REFINE * (n / 2 + 2);
        let hs = h / TABLE_REFINE as f64;
        let side = (2 * offset + 1) as usize;
        // Sum over the images outside the explicit block, to first order in e:
        // (1 - q/2) e L^{-q} sum_{outside} |n|^{-q}, the sum replaced by its integral.
        let (gx, gw) = gauss_legendre(24);
        let shape: f64 = gx.iter().zip(&gw).map(|(x, w)| 0.5 * w * (1.0 + (0.5 * (x + 1.0)).powi(2)).powf(-0.5 * q)).sum();
        let a = IMAGE_SHELLS as f64 + 0.5;
        let tail = -4.0 * a.powf(2.0 - q) * shape * l.powf(-q);
        let mut images = [vec![0.0; side * side], vec![0.0; side * side]];
        let vals: Vec<(f64, f64)> = (0..side * side)
            .into_par_iter()
            .map(|idx| {
                let e1 = ((idx / side) as i64 - offset) as f64 * hs;
                let e2 = ((idx % side) as i64 - offset) as f64 * hs;
                let (mut s1, mut s2) = (tail * e1, tail * e2);
                for i in -IMAGE_SHELLS..=IMAGE_SHELLS {
                    for j in -IMAGE_SHELLS..=IMAGE_SHELLS {
                        if i == 0 && j == 0 {
                            continue;
                        }
                        let d1 = e1 + i as f64 * l;
                        let d2 = e2 + j as f64 * l;
                        let w = (d1 * d1 + d2 * d2).powf(-0.5 * q);
                        s1 += d1 * w;
                        s2 += d2 * w;
                    }
                }
                (s1, s2)
            })
            .collect();
        for (idx, v) in vals.into_iter().enumerate() {
            images[0][idx] = v.0;
            images[1][idx] = v.1;
        }
        let radial = [2.0, 4.0].map(|k: f64| {
            let p = k - 1.0 - 2.0 * alpha;
            let r1 = 0.75 * CUTOFF_SCALE;
            let r2 = 4.0 / 3.0 * CUTOFF_SCALE;
            let head = r1.powf(p + 1.0) / (p + 1.0);
            head + adaptive(&|r: f64| cutoff(r) * r.powf(p), r1, r2, 1e-14).unwrap_or(0.0)
        });
        let reach = (4.0 / 3.0 * CUTOFF_SCALE).ceil() as i64;
        let mut lattice = vec![];
        for i in -reach..=reach {
            for j in -reach..=reach {
                let r = ((i * i + j * j) as f64).sqrt();
                if r > 0.0 && cutoff(r) > 0.0 {
                    lattice.push((i as f64, j as f64, cutoff(r)));
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            alpha,
            q,
            images,
            side,
            offset,
            radial,
            lattice,
        })
    }

    /// Nearest-image part and image sum at the wrapped displacement `e`.
    #[inline]
    fn eval(&self, e1: f64, e2: f64) -> ((f64, f64), (f64, f64)) {
        let w = (e1 * e1 + e2 * e2).powf(-0.5 * self.q);
        ((e1 * w, e2 * w), self.image_at(e1, e2))
    }

    fn image_at(&self, e1: f64, e2: f64) -> (f64, f64) {
        let h = self.grid.spacing() / TABLE_REFINE as f64;
        let s1 = e1 / h + self.offset as f64;
        let s2 = e2 / h + self.offset as f64;
        let (f1, f2) = (s1.floor(), s2.floor());
        let (t1, t2) = (s1 - f1, s2 - f2);
        let w = |t: f64| {
            [
                -t * (t - 1.0) * (t - 2.0) / 6.0,
                (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                -(t + 1.0) * t * (t - 2.0) / 2.0,
                (t + 1.0) * t * (t - 1.0) / 6.0,
            ]
        };
        let (w1, w2) = (w(t1), w(t2));
        let (i0, j0) = (f1 as i64 - 1, f2 as i64 - 1);
        let mut out = (0.0, 0.0);
        for (a, wa) in w1.iter().enumerate() {
            let i = (i0 + a as i64).clamp(0, self.side as i64 - 1) as usize;
            for (b, wb) in w2.iter().enumerate() {
                let j = (j0 + b as i64).clamp(0, self.side as i64 - 1) as usize;
                let k = i * self.side + j;
                out.0 += wa * wb * self.images[0][k];
                out.1 += wa * wb * self.images[1][k];
            }
        }
        out
    }

    /// Integral minus punctured lattice sum (unit spacing) of
    /// `cutoff(|m|) m^mono / |F m|^q` for the quadratic monomials
    /// `m1^2, m1 m2, m2^2` and the quartic monomials `m1^{4-k} m2^k`.
    pub fn lattice_defects(&self, f: &Mat2) -> ([f64; 3], [f64; 5]) {
        let q = self.q;
        let norm_q = |a: f64, b: f64| {
            let x = f[0] * a + f[1] * b;
            let y = f[2] * a + f[3] * b;
            (x * x + y * y).powf(-0.5 * q)
        };
        let mut ang2 = [0.0; 3];
        let mut ang4 = [0.0; 5];
        let dth = 2.0 * PI / ANGLES as f64;
        for k in 0..ANGLES {
            let th = k as f64 * dth;
            let (c, s) = (th.cos(), th.sin());
            let w = norm_q(c, s) * dth;
            for (p, slot) in ang2.iter_mut().enumerate() {
                *slot += w * c.powi(2 - p as i32) * s.powi(p as i32);
            }
            for (p, slot) in ang4.iter_mut().enumerate() {
                *slot += w * c.powi(4 - p as i32) * s.powi(p as i32);
            }
        }
        let mut sum2 = [0.0; 3];
        let mut sum4 = [0.0; 5];
        for &(a, b, chi) in &self.lattice {
            let w = chi * norm_q(a, b);
            for (p, slot) in sum2.iter_mut().enumerate() {
                *slot += w * a.powi(2 - p as i32) * b.powi(p as i32);
            }
            for (p, slot) in sum4.iter_mut().enumerate() {
                *slot += w * a.powi(4 - p as i32) * b.powi(p as i32);
            }
        }
        (
            [0, 1, 2].map(|p| self.radial[0] * ang2[p] - sum2[p]),
            [0, 1, 2, 3, 4].map(|p| self.radial[1] * ang4[p] - sum4[p]),
        )
    }
}

/// Node images and Jacobians of a map used inside PV integrals.
#[derive(Clone, Debug)]
pub struct MapGeometry {
    pub positions: Vec<(f64, f64)>,
    pub jacobian: Vec<Mat2>,
    identity: bool,
    defects: Vec<([f64; 3], [f64; 5])>,
}

impl MapGeometry {
    pub fn identity(kernel: &PeriodicKernel) -> Self {
        let g = &kernel.grid;
        let d = kernel.lattice_defects(&IDENTITY);
        Self {
            positions: (0..g.len()).map(|i| g.point(i)).collect(),
            jacobian: vec![IDENTITY; g.len()],
            identity: true,
            defects: vec![d; g.len()],
        }
    }

    pub fn from_flow(kernel: &PeriodicKernel, fm: &FlowMap) -> Result<Self> {
        if fm.grid != kernel.grid {
            return Err(Error::GridMismatch);
        }
        let n = fm.grid.len();
        let positions: Vec<(f64, f64)> = (0..n).map(|i| fm.image(i)).collect();
        let jacobian: Vec<Mat2> = (0..n).map(|i| fm.gradient_at(i)).collect();
        let defects = jacobian.par_iter().map(|f| kernel.lattice_defects(f)).collect();
        Ok(Self {
            positions,
            jacobian,
            identity: false,
            defects,
        })
    }
}

/// Per-node Taylor data of a PV numerator `N^c(y, z)` for output component `c`:
/// `N^c_j(y, y + d) = -(P^c d)_j - ... - (1/6) T^c_j[d, d, d] - ...`.
struct Taylor<'a> {
    first: &'a [[Mat2; 2]],
    /// `T^c_j` stored by the number of derivatives along axis 1.
    third: Option<&'a [[[[f64; 4]; 2]; 2]]>,
}

/// Result of a PV evaluation for two output components.
#[derive(Clone, Debug)]
pub struct PvOutput {
    pub value: [ScalarField; 2],
    /// `L^2` norm of the contribution of the non-nearest periodic images.
    pub image_norm: f64,
    /// `L^2` norm of the singular lattice correction.
    pub correction_norm: f64,
}

/// `sum_k sign_k p.v. \int K(X_k(y) - X_k(z)) . N(y, z) dz` for both components.
fn pv_integral(
    kernel: &PeriodicKernel,
    maps: &[(&MapGeometry, f64)],
    numer: &(dyn Fn(usize, usize) -> [[f64; 2]; 2] + Sync),
    taylor: &Taylor,
) -> Result<PvOutput> {
    let g = &kernel.grid;
    let n = g.n();
    let h = g.spacing();
    let cell = h * h;
    let two_a = 2.0 * kernel.alpha;
    let s2 = h.powf(2.0 - two_a);
    let s4 = h.powf(4.0 - two_a);
    let id_table = if maps.iter().any(|(m, _)| m.identity) {
        let t: Vec<((f64, f64), (f64, f64))> = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if idx == 0 {
                    return ((0.0, 0.0), (0.0, 0.0));
                }
                let (x1, x2) = g.point(idx);
                kernel.eval(g.wrap_delta(x1), g.wrap_delta(x2))
            })
            .collect();
        Some(t)
    } else {
        None
    };
    let rows: Vec<([f64; 2], [f64; 2], [f64; 2])> = (0..g.len())
        .into_par_iter()
        .map(|y| {
            let (iy, jy) = (y / n, y % n);
            let mut total = [0.0; 2];
            let mut image = [0.0; 2];
            let mut corr = [0.0; 2];
            for z in 0..g.len() {
                if z == y {
                    continue;
                }
                let nz = numer(y, z);
                for &(m, sign) in maps {
                    let (sing, img) = if m.identity {
                        let (iz, jz) = (z / n, z % n);
                        let di = (iy + n - iz) % n;
                        let dj = (jy + n - jz) % n;
                        id_table.as_ref().unwrap()[di * n + dj]
                    } else {
                        let (a, b) = (m.positions[y], m.positions[z]);
                        kernel.eval(g.wrap_delta(a.0 - b.0), g.wrap_delta(a.1 - b.1))
                    };
                    for c in 0..2 {
                        let s = (sing.0 + img.0) * nz[c][0] + (sing.1 + img.1) * nz[c][1];
                        total[c] += sign * cell * s;
                        image[c] += sign * cell * (img.0 * nz[c][0] + img.1 * nz[c][1]);
                    }
                }
            }
            for &(m, sign) in maps {
                let f = &m.jacobian[y];
                let (d2, d4) = &m.defects[y];
                for c in 0..2 {
                    // d^T F^T P d
                    let p = &taylor.first[y][c];
                    let s = [
                        f[0] * p[0] + f[2] * p[2],
                        f[0] * p[1] + f[2] * p[3],
                        f[1] * p[0] + f[3] * p[2],
                        f[1] * p[1] + f[3] * p[3],
                    ];
                    let quad = [s[0], s[1] + s[2], s[3]];
                    let mut e = s2 * (0..3).map(|k| quad[k] * d2[k]).sum::<f64>();
                    if let Some(third) = taylor.third {
                        let t = &third[y][c];
                        let mut quart = [0.0; 5];
                        for bits in 0..16u32 {
                            let a = (bits & 1) as usize;
                            let rest = bits >> 1;
                            let k = rest.count_ones() as usize;
                            let mut v = 0.0;
                            for j in 0..2 {
                                v += f[2 * j + a] * t[j][k];
                            }
                            quart[a + k] += v / 6.0;
                        }
                        e += s4 * (0..5).map(|k| quart[k] * d4[k]).sum::<f64>();
                    }
                    total[c] += sign * e;
                    corr[c] += sign * e;
                }
            }
            (total, image, corr)
        })
        .collect();
    let field = |c: usize, which: usize| -> ScalarField {
        ScalarField {
            grid: g.clone(),
            data: rows
                .iter()
                .map(|r| match which {
                    0 => r.0[c],
                    1 => r.1[c],
                    _ => r.2[c],
                })
                .collect(),
        }
    };
    let image_norm = field(0, 1).l2_norm().hypot(field(1, 1).l2_norm());
    let correction_norm = field(0, 2).l2_norm().hypot(field(1, 2).l2_norm());
    let value = [field(0, 0), field(1, 0)];
    if !value[0].is_finite() || !value[1].is_finite() {
        return Err(Error::QuadratureNonConvergence("non-finite principal value".into()));
    }
    Ok(PvOutput {
        value,
        image_norm,
        correction_norm,
    })
}

/// Derivatives `d_b M_j` and third derivatives of a vector field `M` at one node.
struct FieldTaylor {
    first: [[ScalarField; 2]; 2],
    third: [[ScalarField; 4]; 2],
}

impl FieldTaylor {
    fn new(m: [&ScalarField; 2]) -> Self {
        Self {
            first: [0, 1].map(|j| [partial(m[j], 0), partial(m[j], 1)]),
            third: [0, 1].map(|j| [0u32, 1, 2, 3].map(|k| mixed_partial(m[j], 3 - k, k))),
        }
    }

    fn p(&self, y: usize) -> Mat2 {
        [
            self.first[0][0].data[y],
            self.first[0][1].data[y],
            self.first[1][0].data[y],
            self.first[1][1].data[y],
        ]
    }

    fn t(&self, y: usize) -> [[f64; 4]; 2] {
        [0, 1].map(|j| [0, 1, 2, 3].map(|k| self.third[j][k].data[y]))
    }
}

/// `p.v. \int K(X(y) - X(z)) . (M^c(y) - M^c(z)) dz` for one or two vector fields `M^c`.
fn gradient_form(kernel: &PeriodicKernel, map: &MapGeometry, m: [[&ScalarField; 2]; 2]) -> Result<PvOutput> {
    let taylors = [FieldTaylor::new(m[0]), FieldTaylor::new(m[1])];
    let len = kernel.grid.len();
    let first: Vec<[Mat2; 2]> = (0..len).map(|y| [taylors[0].p(y), taylors[1].p(y)]).collect();
    let third: Vec<[[[f64; 4]; 2]; 2]> = (0..len).map(|y| [taylors[0].t(y), taylors[1].t(y)]).collect();
    let data = m.map(|mc| [mc[0].data.clone(), mc[1].data.clone()]);
    let numer = move |y: usize, z: usize| -> [[f64; 2]; 2] {
        [0, 1].map(|c| [data[c][0][y] - data[c][0][z], data[c][1][y] - data[c][1][z]])
    };
    pv_integral(
        kernel,
        &[(map, 1.0)],
        &numer,
        &Taylor {
            first: &first,
            third: Some(&third),
        },
    )
}

fn check_params(f: &ScalarField, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidExponent(alpha));
    }
    if !f.is_finite() {
        return Err(Error::InvalidParameter("non-finite input field".into()));
    }
    Ok(())
}

/// `d_i Lambda^{2 alpha - 2} f = c p.v. \int (x - z)_i / |x - z|^{2+2 alpha} (f(x) - f(z)) dz`.
pub fn pv_fractional_gradient(f: &ScalarField, axis: usize, alpha: f64) -> Result<(ScalarField, PvOutput)> {
    check_params(f, alpha)?;
    if axis > 1 {
        return Err(Error::InvalidParameter(format!("axis {axis} out of range")));
    }
    let kernel = PeriodicKernel::new(&f.grid, alpha)?;
    let zero = ScalarField::zeros(&f.grid);
    let m = if axis == 0 { [f, &zero] } else { [&zero, f] };
    let out = gradient_form(&kernel, &MapGeometry::identity(&kernel), [m, [&zero, &zero]])?;
    let c = planar_dissipation_constant(alpha);
    Ok((out.value[0].scale(c), out))
}

/// `Lambda^{2 alpha} f = -c p.v. \int (x - z) . (grad f(x) - grad f(z)) / |x - z|^{2+2 alpha} dz`.
pub fn pv_fractional_laplacian(f: &ScalarField, alpha: f64) -> Result<(ScalarField, PvOutput)> {
    check_params(f, alpha)?;
    let kernel = PeriodicKernel::new(&f.grid, alpha)?;
    let gf = gradient(f);
    let zero = ScalarField::zeros(&f.grid);
    let out = gradient_form(&kernel, &MapGeometry::identity(&kernel), [[&gf.comp[0], &gf.comp[1]], [&zero, &zero]])?;
    let c = planar_dissipation_constant(alpha);
    Ok((out.value[0].scale(-c), out))
}

fn mat_fields_at(m: &[ScalarField; 4], idx: usize) -> Mat2 {
    [m[0].data[idx], m[1].data[idx], m[2].data[idx], m[3].data[idx]]
}

fn mat_fields(grid: &Grid2D, vals: &[Mat2]) -> [ScalarField; 4] {
    [0, 1, 2, 3].map(|k| ScalarField {
        grid: grid.clone(),
        data: vals.iter().map(|m| m[k]).collect(),
    })
}

/// `(A^t w)_j = sum_k A_kj w_k` at every node.
fn transpose_apply(a: &[ScalarField; 4], w: &VectorField2) -> VectorField2 {
    let g = w.grid().clone();
    let len = g.len();
    let mut c0 = Vec::with_capacity(len);
    let mut c1 = Vec::with_capacity(len);
    for i in 0..len {
        let m = mat_fields_at(a, i);
        let (w0, w1) = (w.comp[0].data[i], w.comp[1].data[i]);
        c0.push(m[0] * w0 + m[2] * w1);
        c1.push(m[1] * w0 + m[3] * w1);
    }
    VectorField2 {
        comp: [ScalarField { grid: g.clone(), data: c0 }, ScalarField { grid: g, data: c1 }],
    }
}

/// `A w` at every node.
fn apply(a: &[ScalarField; 4], w: &VectorField2) -> VectorField2 {
    let g = w.grid().clone();
    let len = g.len();
    let mut c0 = Vec::with_capacity(len);
    let mut c1 = Vec::with_capacity(len);
    for i in 0..len {
        let m = mat_fields_at(a, i);
        let (w0, w1) = (w.comp[0].data[i], w.comp[1].data[i]);
        c0.push(m[0] * w0 + m[1] * w1);
        c1.push(m[2] * w0 + m[3] * w1);
    }
    VectorField2 {
        comp: [ScalarField { grid: g.clone(), data: c0 }, ScalarField { grid: g, data: c1 }],
    }
}

/// Solution quantities in Lagrangian coordinates at one time.
#[derive(Clone, Debug)]
pub struct LagrangianState {
    /// `rho o X`, equal to the initial density.
    pub eta: ScalarField,
    /// `u o X`.
    pub v: VectorField2,
    /// `pi o X`.
    pub pi: ScalarField,
    /// `d_t v`; zero unless supplied.
    pub dvdt: VectorField2,
    pub fm: FlowMap,
    /// `(grad X)^{-1}`.
    pub a: [ScalarField; 4],
    /// `grad X - Id`.
    pub b: [ScalarField; 4],
}

impl LagrangianState {
    /// Lagrangian fields from Eulerian ones, evaluating the trigonometric
    /// interpolants of `u` and `pi` at the images `X(y)`.
    pub fn from_eulerian(rho0: &ScalarField, u: &VectorField2, pi: &ScalarField, fm: FlowMap) -> Result<Self> {
        rho0.check_grid(&u.comp[0])?;
        rho0.check_grid(pi)?;
        let g = rho0.grid.clone();
        if fm.grid != g {
            return Err(Error::GridMismatch);
        }
        let pts: Vec<(f64, f64)> = (0..g.len()).map(|i| fm.image(i)).collect();
        let compose = |f: &ScalarField| ScalarField {
            grid: g.clone(),
            data: evaluate_at(f, &pts),
        };
        let v = VectorField2::new(compose(&u.comp[0]), compose(&u.comp[1]))?;
        Self::from_parts(rho0.clone(), v, compose(pi), fm)
    }

    pub fn from_parts(eta: ScalarField, v: VectorField2, pi: ScalarField, fm: FlowMap) -> Result<Self> {
        eta.check_grid(&v.comp[0])?;
        eta.check_grid(&pi)?;
        let g = eta.grid.clone();
        let grads: Vec<Mat2> = (0..g.len()).map(|i| fm.gradient_at(i)).collect();
        if let Some(bad) = grads.iter().find(|m| mat_det(m) <= 0.0) {
            return Err(Error::OutsideBiLipschitzWindow(mat_det(bad)));
        }
        let a: Vec<Mat2> = grads.iter().map(mat_inv).collect();
        let b: Vec<Mat2> = grads.iter().map(|m| [m[0] - 1.0, m[1], m[2], m[3] - 1.0]).collect();
        Ok(Self {
            eta,
            dvdt: VectorField2::zeros(&g),
            v,
            pi,
            a: mat_fields(&g, &a),
            b: mat_fields(&g, &b),
            fm,
        })
    }

    pub fn with_time_derivative(mut self, dvdt: VectorField2) -> Result<Self> {
        self.v.comp[0].check_grid(&dvdt.comp[0])?;
        self.dvdt = dvdt;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.eta.grid
    }

    /// `A^t : grad v`.
    pub fn lagrangian_divergence(&self) -> ScalarField {
        let g = self.grid();
        let gv = crate::spectral::velocity_gradient(&self.v);
        ScalarField {
            grid: g.clone(),
            data: (0..g.len())
                .map(|i| {
                    let a = mat_fields_at(&self.a, i);
                    // (grad v)_{jk} = d_k v_j, A^t : grad v = sum_{jk} A_kj d_k v_j
                    a[0] * gv[0].data[i] + a[2] * gv[1].data[i] + a[1] * gv[2].data[i] + a[3] * gv[3].data[i]
                })
                .collect(),
        }
    }

    /// `div_y (A v)`.
    pub fn piola_divergence(&self) -> ScalarField {
        divergence(&apply(&self.a, &self.v))
    }

    /// Extremes of `|X(y) - X(z)| / |y - z|` on random and neighbouring pairs.
    pub fn window_ratios(&self, pairs: usize, seed: u64) -> (f64, f64) {
        bi_lipschitz_ratios(&self.fm, pairs, seed)
    }

    fn check_window(&self) -> Result<()> {
        let (lo, hi) = self.window_ratios(10_000, 0x5eed);
        if lo < WINDOW.0 {
            return Err(Error::OutsideBiLipschitzWindow(lo));
        }
        if hi > WINDOW.1 {
            return Err(Error::OutsideBiLipschitzWindow(hi));
        }
        Ok(())
    }
}

/// `Lambda^{2 alpha}_v v = -c p.v. \int (X(y) - X(z)) . (A^t(y) grad v(y) - A^t(z) grad v(z)) / |X(y) - X(z)|^{2+2 alpha} dz`.
pub fn lambda2alpha_lagrangian(ls: &LagrangianState, alpha: f64) -> Result<(VectorField2, PvOutput)> {
    ls.check_window()?;
    let kernel = PeriodicKernel::new(ls.grid(), alpha)?;
    let map = MapGeometry::from_flow(&kernel, &ls.fm)?;
    let m = [0, 1].map(|c| transpose_apply(&ls.a, &gradient(&ls.v.comp[c])));
    let out = gradient_form(&kernel, &map, [[&m[0].comp[0], &m[0].comp[1]], [&m[1].comp[0], &m[1].comp[1]]])?;
    let c = -planar_dissipation_constant(alpha);
    let v = VectorField2::new(out.value[0].scale(c), out.value[1].scale(c))?;
    Ok((v, out))
}

/// `sum_{k=1}^K sum_{j<k} (-1)^k B_1^j (B_1 - B_2) B_2^{k-1-j}`, the Neumann-series
/// difference `A_1 - A_2`, with the truncation bound `K q^K / (1 - q)^2` for `q = max ||B_i||`.
pub fn delta_a_series(b1: &[ScalarField; 4], b2: &[ScalarField; 4], k_terms: usize) -> Result<([ScalarField; 4], f64)> {
    let g = b1[0].grid.clone();
    let mut qmax: f64 = 0.0;
    let vals: Vec<Mat2> = (0..g.len())
        .map(|i| {
            let m1 = mat_fields_at(b1, i);
            let m2 = mat_fields_at(b2, i);
            qmax = qmax.max(crate::flow::mat_norm(&m1)).max(crate::flow::mat_norm(&m2));
            let db = [m1[0] - m2[0], m1[1] - m2[1], m1[2] - m2[2], m1[3] - m2[3]];
            let mut acc = [0.0; 4];
            // powers of B_1 and B_2
            let mut p1 = vec![IDENTITY];
            let mut p2 = vec![IDENTITY];
            for _ in 1..k_terms {
                p1.push(mat_mul(p1.last().unwrap(), &m1));
                p2.push(mat_mul(p2.last().unwrap(), &m2));
            }
            for k in 1..=k_terms {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..k {
                    let t = mat_mul(&mat_mul(&p1[j], &db), &p2[k - 1 - j]);
                    for c in 0..4 {
                        acc[c] += sign * t[c];
                    }
                }
            }
            acc
        })
        .collect();
    if qmax >= 1.0 {
        return Err(Error::OutsideNeumannRegime(qmax));
    }
    let k = k_terms as f64;
    let bound = (k + 1.0) * qmax.powf(k) / ((1.0 - qmax) * (1.0 - qmax));
    Ok((mat_fields(&g, &vals), bound))
}

/// `d_t A = sum_k (-1)^k sum_j B^j (grad v) B^{k-1-j}` truncated at `k_terms`.
pub fn dt_a_series(b: &[ScalarField; 4], grad_v: &[ScalarField; 4], k_terms: usize) -> [ScalarField; 4] {
    let g = b[0].grid.clone();
    let vals: Vec<Mat2> = (0..g.len())
        .map(|i| {
            let m = mat_fields_at(b, i);
            let dv = mat_fields_at(grad_v, i);
            let mut pw = vec![IDENTITY];
            for _ in 1..k_terms {
                pw.push(mat_mul(pw.last().unwrap(), &m));
            }
            let mut acc = [0.0; 4];
            for k in 1..=k_terms {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..k {
                    let t = mat_mul(&mat_mul(&pw[j], &dv), &pw[k - 1 - j]);
                    for c in 0..4 {
                        acc[c] += sign * t[c];
                    }
                }
            }
            acc
        })
        .collect();
    mat_fields(&g, &vals)
}

/// Right-hand sides of the difference system of two Lagrangian solutions.
#[derive(Clone, Debug)]
pub struct TwistedTerms {
    pub df1: VectorField2,
    pub df2: VectorField2,
    pub df2_split: [VectorField2; 4],
    pub dg: VectorField2,
    pub dtg: VectorField2,
    pub norms: TwistedNorms,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TwistedNorms {
    pub df1: f64,
    pub df2: f64,
    pub df2_split: [f64; 4],
    /// `||div dg||` in the homogeneous Sobolev space of order `2 alpha - 1`.
    pub div_dg: f64,
    pub dtg: f64,
    /// `||sum of the split - direct|| / ||direct||`.
    pub split_mismatch: f64,
    /// `||Id - A_1||_inf`, `||grad dPi||_2`, `||dA||_inf`, `||grad Pi_2||_2`.
    pub factors: [f64; 4],
}

const SERIES_TERMS: usize = 40;

/// `delta f_1`, `delta f_2` (direct and four-way split), `delta g` and `d_t delta g`.
pub fn twisted_rhs_terms(ls1: &LagrangianState, ls2: &LagrangianState, alpha: f64) -> Result<TwistedTerms> {
    let g = ls1.grid().clone();
    if *ls2.grid() != g {
        return Err(Error::GridMismatch);
    }
    ls1.check_window()?;
    ls2.check_window()?;
    let len = g.len();
    let dv = ls1.v.sub(&ls2.v)?;
    let dpi = ls1.pi.sub(&ls2.pi)?;
    let da_vals: Vec<Mat2> = (0..len)
        .map(|i| {
            let (a1, a2) = (mat_fields_at(&ls1.a, i), mat_fields_at(&ls2.a, i));
            [a1[0] - a2[0], a1[1] - a2[1], a1[2] - a2[2], a1[3] - a2[3]]
        })
        .collect();
    let da = mat_fields(&g, &da_vals);
    let id_minus = |a: &[ScalarField; 4]| -> [ScalarField; 4] {
        [a[0].map(|v| 1.0 - v), a[1].scale(-1.0), a[2].scale(-1.0), a[3].map(|v| 1.0 - v)]
    };

    // delta f_1 = (Id - A_1^t) grad dPi - dA^t grad Pi_2
    let grad_dpi = gradient(&dpi);
    let grad_pi2 = gradient(&ls2.pi);
    let df1 = transpose_apply(&id_minus(&ls1.a), &grad_dpi).sub(&transpose_apply(&da, &grad_pi2))?;

    // delta g = (Id - A_1) dv - dA v_2
    let dg = apply(&id_minus(&ls1.a), &dv).sub(&apply(&da, &ls2.v))?;

    // d_t delta g
    let dta1 = dt_a_series(&ls1.b, &crate::spectral::velocity_gradient(&ls1.v), SERIES_TERMS);
    let dta2 = dt_a_series(&ls2.b, &crate::spectral::velocity_gradient(&ls2.v), SERIES_TERMS);
    let dtg = apply(&dta2, &ls2.v)
        .sub(&apply(&dta1, &ls1.v))?
        .add(&apply(&id_minus(&ls1.a), &ls1.dvdt).sub(&apply(&id_minus(&ls2.a), &ls2.dvdt))?)?;

    // delta f_2 and its split
    let kernel = PeriodicKernel::new(&g, alpha)?;
    let m1 = MapGeometry::from_flow(&kernel, &ls1.fm)?;
    let m2 = MapGeometry::from_flow(&kernel, &ls2.fm)?;
    let gv2 = [gradient(&ls2.v.comp[0]), gradient(&ls2.v.comp[1])];
    let dgv2 = [0, 1].map(|c| [partial(&gv2[c].comp[0], 0), partial(&gv2[c].comp[0], 1), partial(&gv2[c].comp[1], 0), partial(&gv2[c].comp[1], 1)]);
    let deriv4 = |m: &[ScalarField; 4]| [0, 1].map(|b| [0, 1, 2, 3].map(|k| partial(&m[k], b)));
    let d_da = deriv4(&da);
    let d_a1 = deriv4(&ls1.a);
    let d_a2 = deriv4(&ls2.a);
    let gval = |c: usize, i: usize| (gv2[c].comp[0].data[i], gv2[c].comp[1].data[i]);
    // (M^t w)_j with M stored row-major
    let mt = |m: &Mat2, w: (f64, f64)| (m[0] * w.0 + m[2] * w.1, m[1] * w.0 + m[3] * w.1);
    let at = |f: &[ScalarField; 4], i: usize| mat_fields_at(f, i);
    // d_b (M^t) g + M^t d_b g as a matrix P_jb for P = coefficient in -(P d)
    let p_product = |dm: Option<&[[ScalarField; 4]; 2]>, m: Option<&[ScalarField; 4]>, c: usize, i: usize| -> Mat2 {
        let mut p = [0.0; 4];
        for b in 0..2 {
            let mut col = (0.0, 0.0);
            if let Some(dm) = dm {
                let dmb = at(&dm[b], i);
                let w = mt(&dmb, gval(c, i));
                col.0 += w.0;
                col.1 += w.1;
            }
            if let Some(m) = m {
                let mm = at(m, i);
                let dg = (dgv2[c][b].data[i], dgv2[c][2 + b].data[i]);
                let w = mt(&mm, dg);
                col.0 += w.0;
                col.1 += w.1;
            }
            p[b] = col.0;
            p[2 + b] = col.1;
        }
        p
    };
    let gd: [[Vec<f64>; 2]; 2] = [0, 1].map(|c| [gv2[c].comp[0].data.clone(), gv2[c].comp[1].data.clone()]);
    let daf = &da;
    let a1f = &ls1.a;
    let a2f = &ls2.a;
    let taylor_of = |dm: Option<&[[ScalarField; 4]; 2]>, m: Option<&[ScalarField; 4]>| -> Vec<[Mat2; 2]> {
        (0..len).map(|i| [p_product(dm, m, 0, i), p_product(dm, m, 1, i)]).collect()
    };
    let c_alpha = planar_dissipation_constant(alpha);

    // direct: PV_1(A_1^t g) - PV_2(A_2^t g)
    let direct = {
        let n1 = |y: usize, z: usize| -> [[f64; 2]; 2] {
            [0, 1].map(|c| {
                let a = mt(&at(a1f, y), (gd[c][0][y], gd[c][1][y]));
                let b = mt(&at(a1f, z), (gd[c][0][z], gd[c][1][z]));
                [a.0 - b.0, a.1 - b.1]
            })
        };
        let n2 = |y: usize, z: usize| -> [[f64; 2]; 2] {
            [0, 1].map(|c| {
                let a = mt(&at(a2f, y), (gd[c][0][y], gd[c][1][y]));
                let b = mt(&at(a2f, z), (gd[c][0][z], gd[c][1][z]));
                [a.0 - b.0, a.1 - b.1]
            })
        };
        let t1 = taylor_of(Some(&d_a1), Some(a1f));
        let t2 = taylor_of(Some(&d_a2), Some(a2f));
        let o1 = pv_integral(&kernel, &[(&m1, 1.0)], &n1, &Taylor { first: &t1, third: None })?;
        let o2 = pv_integral(&kernel, &[(&m2, 1.0)], &n2, &Taylor { first: &t2, third: None })?;
        [0, 1].map(|c| o1.value[c].sub(&o2.value[c]).unwrap().scale(c_alpha))
    };
    let df2 = VectorField2::new(direct[0].clone(), direct[1].clone())?;

    let split1 = |y: usize, z: usize| -> [[f64; 2]; 2] {
        [0, 1].map(|c| {
            let a = mt(&at(daf, y), (gd[c][0][y], gd[c][1][y]));
            let b = mt(&at(daf, z), (gd[c][0][y], gd[c][1][y]));
            [a.0 - b.0, a.1 - b.1]
        })
    };
    let split2 = |y: usize, z: usize| -> [[f64; 2]; 2] {
        [0, 1].map(|c| {
            let w = mt(&at(daf, z), (gd[c][0][y] - gd[c][0][z], gd[c][1][y] - gd[c][1][z]));
            [w.0, w.1]
        })
    };
    let split3 = |y: usize, z: usize| -> [[f64; 2]; 2] {
        [0, 1].map(|c| {
            let a = mt(&at(a2f, y), (gd[c][0][y], gd[c][1][y]));
            let b = mt(&at(a2f, z), (gd[c][0][y], gd[c][1][y]));
            [a.0 - b.0, a.1 - b.1]
        })
    };
    let split4 = |y: usize, z: usize| -> [[f64; 2]; 2] {
        [0, 1].map(|c| {
            let w = mt(&at(a2f, z), (gd[c][0][y] - gd[c][0][z], gd[c][1][y] - gd[c][1][z]));
            [w.0, w.1]
        })
    };
    let t_1 = taylor_of(Some(&d_da), None);
    let t_2 = taylor_of(None, Some(daf));
    let t_3 = taylor_of(Some(&d_a2), None);
    let t_4 = taylor_of(None, Some(a2f));
    let one = [(&m1, 1.0)];
    let diff = [(&m1, 1.0), (&m2, -1.0)];
    let parts = [
        pv_integral(&kernel, &one, &split1, &Taylor { first: &t_1, third: None })?,
        pv_integral(&kernel, &one, &split2, &Taylor { first: &t_2, third: None })?,
        pv_integral(&kernel, &diff, &split3, &Taylor { first: &t_3, third: None })?,
        pv_integral(&kernel, &diff, &split4, &Taylor { first: &t_4, third: None })?,
    ];
    let df2_split = parts.map(|p| VectorField2::new(p.value[0].scale(c_alpha), p.value[1].scale(c_alpha)).unwrap());
    let recon = df2_split[0].add(&df2_split[1])?.add(&df2_split[2])?.add(&df2_split[3])?;
    let direct_norm = df2.l2_norm();
    let split_mismatch = if direct_norm == 0.0 {
        recon.l2_norm()
    } else {
        recon.sub(&df2)?.l2_norm() / direct_norm
    };

    let norms = TwistedNorms {
        df1: df1.l2_norm(),
        df2: direct_norm,
        df2_split: [0, 1, 2, 3].map(|k| df2_split[k].l2_norm()),
        div_dg: crate::besov::sobolev_norm(&divergence(&dg), 2.0 * alpha - 1.0),
        dtg: dtg.l2_norm(),
        split_mismatch,
        factors: [crate::flow::matrix_linf(&id_minus(&ls1.a)), grad_dpi.l2_norm(), crate::flow::matrix_linf(&da), grad_pi2.l2_norm()],
    };
    Ok(TwistedTerms {
        df1,
        df2,
        df2_split,
        dg,
        dtg,
        norms,
    })
}

/// One shear `x_axis += amplitude sin(2 pi mode x_other / L + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shear {
    pub axis: usize,
    pub amplitude: f64,
    pub mode: u32,
    pub phase: f64,
}

/// Exact flow map of a sequence of steady shear flows, each run for unit time.
/// Every factor preserves area, so the composition does too.
pub fn shear_flow(grid: &Grid2D, shears: &[Shear]) -> Result<FlowMap> {
    let k0 = grid.k0();
    let apply_one = |s: &Shear, p: (f64, f64), sign: f64| -> ((f64, f64), Mat2) {
        let other = if s.axis == 0 { p.1 } else { p.0 };
        let arg = s.mode as f64 * k0 * other + s.phase;
        let shift = sign * s.amplitude * arg.sin();
        let slope = sign * s.amplitude * s.mode as f64 * k0 * arg.cos();
        if s.axis == 0 {
            ((p.0 + shift, p.1), [1.0, slope, 0.0, 1.0])
        } else {
            ((p.0, p.1 + shift), [1.0, 0.0, slope, 1.0])
        }
    };
    for s in shears {
        if s.axis > 1 || !s.amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!("bad shear {s:?}")));
        }
    }
    let len = grid.len();
    let mut fwd_d = [Vec::with_capacity(len), Vec::with_capacity(len)];
    let mut inv_d = [Vec::with_capacity(len), Vec::with_capacity(len)];
    let mut fwd_g = Vec::with_capacity(len);
    let mut inv_g = Vec::with_capacity(len);
    for idx in 0..len {
        let y = grid.point(idx);
        let (mut p, mut m) = (y, IDENTITY);
        for s in shears {
            let (q, j) = apply_one(s, p, 1.0);
            p = q;
            m = mat_mul(&j, &m);
        }
        fwd_d[0].push(p.0 - y.0);
        fwd_d[1].push(p.1 - y.1);
        fwd_g.push(m);
        let (mut p, mut m) = (y, IDENTITY);
        for s in shears.iter().rev() {
            let (q, j) = apply_one(s, p, -1.0);
            p = q;
            m = mat_mul(&j, &m);
        }
        inv_d[0].push(p.0 - y.0);
        inv_d[1].push(p.1 - y.1);
        inv_g.push(m);
    }
    let field = |v: Vec<f64>| ScalarField { grid: grid.clone(), data: v };
    let [f0, f1] = fwd_d;
    let [i0, i1] = inv_d;
    Ok(FlowMap {
        grid: grid.clone(),
        t0: 0.0,
        t1: shears.len() as f64,
        substeps: 0,
        displacement: VectorField2::new(field(f0), field(f1))?,
        gradient: mat_fields(grid, &fwd_g),
        inverse_displacement: Some(VectorField2::new(field(i0), field(i1))?),
        inverse_gradient: Some(mat_fields(grid, &inv_g)),
        warnings: vec![],
    })
}

/// `count` alternating shears with random amplitudes up to `max_amplitude`
/// (relative to the box), modes 1..=2 and random phases.
pub fn random_shear_flow(grid: &Grid2D, count: usize, max_amplitude: f64, seed: u64) -> Result<FlowMap> {
    use rand::Rng;
    let mut rng = crate::sample::rng(seed);
    let l = grid.box_length();
    let shears: Vec<Shear> = (0..count)
        .map(|k| Shear {
            axis: k % 2,
            amplitude: rng.gen_range(-max_amplitude..max_amplitude) * l,
            mode: rng.gen_range(1..=2),
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect();
    shear_flow(grid, &shears)
}

/// Rotation by a quarter turn about the box centre, an isometry of the torus.
/// The stored displacement is not periodic; differences of images are taken modulo `L`.
pub fn quarter_turn(grid: &Grid2D) -> FlowMap {
    let c = 0.5 * grid.box_length();
    let len = grid.len();
    let (mut d0, mut d1, mut i0, mut i1) = (vec![], vec![], vec![], vec![]);
    for idx in 0..len {
        let (y1, y2) = grid.point(idx);
        let (r1, r2) = (y1 - c, y2 - c);
        d0.push(c - r2 - y1);
        d1.push(c + r1 - y2);
        i0.push(c + r2 - y1);
        i1.push(c - r1 - y2);
    }
    let field = |v: Vec<f64>| ScalarField { grid: grid.clone(), data: v };
    FlowMap {
        grid: grid.clone(),
        t0: 0.0,
        t1: 0.5 * PI,
        substeps: 0,
        displacement: VectorField2 { comp: [field(d0), field(d1)] },
        gradient: mat_fields(grid, &vec![[0.0, -1.0, 1.0, 0.0]; len]),
        inverse_displacement: Some(VectorField2 { comp: [field(i0), field(i1)] }),
        inverse_gradient: Some(mat_fields(grid, &vec![[0.0, 1.0, -1.0, 0.0]; len])),
        warnings: vec![],
    }
}

/// `||Lambda^{2 alpha}_v v||_{L^2_y}` and `||Lambda^{2 alpha}(v o X^{-1})||_{L^2_x}` where
/// `u = v o X^{-1}` is supplied on the grid.
pub fn norm_identity(ls: &LagrangianState, u: &VectorField2, alpha: f64) -> Result<(f64, f64)> {
    let (lag, _) = lambda2alpha_lagrangian(ls, alpha)?;
    let eul = fractional_laplacian(u, 2.0 * alpha)?;
    Ok((lag.l2_norm(), eul.l2_norm()))
}
