//! Density patches tracked by boundary markers.
//!
//! The marker chain is the source of truth for the patch geometry; grid densities
//! are produced from it by point-in-polygon rasterization.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow::{advect_points, VelocitySeries};
use crate::grid::Grid2D;
use crate::quadrature::gauss_legendre;

pub const MIN_MARKERS: usize = 64;
/// Largest allowed ratio of the longest to the shortest marker spacing.
pub const MAX_SPACING_RATIO: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Disk { center: (f64, f64), radius: f64 },
    Ellipse { center: (f64, f64), a: f64, b: f64 },
    /// `r(theta) = radius (1 + delta cos(k theta))`.
    SmoothedPolygon { center: (f64, f64), radius: f64, k: u32, delta: f64 },
}

impl Shape {
    fn point(&self, th: f64) -> (f64, f64) {
        match *self {
            Shape::Disk { center, radius } => (center.0 + radius * th.cos(), center.1 + radius * th.sin()),
            Shape::Ellipse { center, a, b } => (center.0 + a * th.cos(), center.1 + b * th.sin()),
            Shape::SmoothedPolygon { center, radius, k, delta } => {
                let r = radius * (1.0 + delta * (k as f64 * th).cos());
                (center.0 + r * th.cos(), center.1 + r * th.sin())
            }
        }
    }

    fn speed(&self, th: f64) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => radius,
            Shape::Ellipse { a, b, .. } => (a * th.sin()).hypot(b * th.cos()),
            Shape::SmoothedPolygon { radius, k, delta, .. } => {
                let kf = k as f64;
                let r = radius * (1.0 + delta * (kf * th).cos());
                let dr = -radius * delta * kf * (kf * th).sin();
                r.hypot(dr)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Disk { radius, .. } => radius > 0.0,
            Shape::Ellipse { a, b, .. } => a > 0.0 && b > 0.0,
            Shape::SmoothedPolygon { radius, delta, .. } => radius > 0.0 && delta.abs() < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate shape {self:?}")))
        }
    }
}

/// Closed, positively oriented marker chain with the density jump across it.
#[derive(Clone, Debug)]
pub struct PatchContour {
    pub markers: Vec<(f64, f64)>,
    pub sigma: f64,
    pub gamma: f64,
    pub shape: Shape,
    pub remeshes: usize,
}

/// `m` markers equally spaced in arclength along `shape`.
pub fn init_contour(shape: Shape, m: usize, sigma: f64, gamma: f64) -> Result<PatchContour> {
    if m < MIN_MARKERS {
        return Err(Error::TooFewMarkers(m));
    }
    shape.validate()?;
    if !(sigma.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("density jump {sigma} must satisfy |sigma| < 1")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    let panels = 64 * m;
    let (gx, gw) = gauss_legendre(8);
    let dth = 2.0 * PI / panels as f64;
    let panel_len = |a: f64, b: f64| -> f64 {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        gx.iter().zip(&gw).map(|(x, w)| w * shape.speed(c + r * x)).sum::<f64>() * r
    };
    let mut cum = Vec::with_capacity(panels + 1);
    cum.push(0.0);
    for p in 0..panels {
        let a = p as f64 * dth;
        cum.push(cum[p] + panel_len(a, a + dth));
    }
    let total = cum[panels];
    let mut markers = Vec::with_capacity(m);
    for i in 0..m {
        let target = total * i as f64 / m as f64;
        let p = match cum.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
            Ok(p) => p.min(panels - 1),
            Err(p) => p - 1,
        };
        let a = p as f64 * dth;
        let mut th = a + dth * (target - cum[p]) / (cum[p + 1] - cum[p]);
        for _ in 0..8 {
            let f = cum[p] + panel_len(a, th) - target;
            th -= f / shape.speed(th);
        }
        markers.push(shape.point(th));
    }
    Ok(PatchContour {
        markers,
        sigma,
        gamma,
        shape,
        remeshes: 0,
    })
}

/// Periodic cubic spline through the markers, parametrized by cumulative chord length.
#[derive(Clone, Debug)]
pub struct ContourSpline {
    knots: Vec<f64>,
    xs: [Vec<f64>; 2],
    second: [Vec<f64>; 2],
}

/// Solve the cyclic tridiagonal system `lo[i] x[i-1] + di[i] x[i] + up[i] x[i+1] = r[i]`.
fn cyclic_tridiagonal(lo: &[f64], di: &[f64], up: &[f64], r: &[f64]) -> Vec<f64> {
    let n = di.len();
    let gamma = -di[0];
    let mut b = di.to_vec();
    b[0] -= gamma;
    b[n - 1] -= up[n - 1] * lo[0] / gamma;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = up[0] / b[0];
        d[0] = rhs[0] / b[0];
        for i in 1..n {
            let m = b[i] - lo[i] * c[i - 1];
            c[i] = up[i] / m;
            d[i] = (rhs[i] - lo[i] * d[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    };
    let x = solve(r);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = up[n - 1];
    let z = solve(&u);
    let v0 = 1.0;
    let vn = lo[0] / gamma;
    let fact = (x[0] * v0 + x[n - 1] * vn) / (1.0 + z[0] * v0 + z[n - 1] * vn);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

impl ContourSpline {
    pub fn new(markers: &[(f64, f64)]) -> Self {
        let m = markers.len();
        let mut knots = Vec::with_capacity(m + 1);
        knots.push(0.0);
        for i in 0..m {
            let a = markers[i];
            let b = markers[(i + 1) % m];
            knots.push(knots[i] + (b.0 - a.0).hypot(b.1 - a.1));
        }
        let h: Vec<f64> = (0..m).map(|i| knots[i + 1] - knots[i]).collect();
        let xs = [
            markers.iter().map(|p| p.0).collect::<Vec<_>>(),
            markers.iter().map(|p| p.1).collect::<Vec<_>>(),
        ];
        let second = [0, 1].map(|c| {
            let y = &xs[c];
            let mut lo = vec![0.0; m];
            let mut di = vec![0.0; m];
            let mut up = vec![0.0; m];
            let mut r = vec![0.0; m];
            for i in 0..m {
                let hp = h[(i + m - 1) % m];
                let hi = h[i];
                lo[i] = hp;
                di[i] = 2.0 * (hp + hi);
                up[i] = hi;
                r[i] = 6.0 * ((y[(i + 1) % m] - y[i]) / hi - (y[i] - y[(i + m - 1) % m]) / hp);
            }
            cyclic_tridiagonal(&lo, &di, &up, &r)
        });
        Self { knots, xs, second }
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    /// Value, first and second derivative of the coordinate `c` on segment `i` at offset `u`.
    fn eval(&self, c: usize, i: usize, u: f64) -> (f64, f64, f64) {
        let m = self.segments();
        let j = (i + 1) % m;
        let h = self.knots[i + 1] - self.knots[i];
        let (y0, y1) = (self.xs[c][i], self.xs[c][j]);
        let (m0, m1) = (self.second[c][i], self.second[c][j]);
        let v = h - u;
        let a = y0 / h - m0 * h / 6.0;
        let b = y1 / h - m1 * h / 6.0;
        let val = m0 * v * v * v / (6.0 * h) + m1 * u * u * u / (6.0 * h) + a * v + b * u;
        let d1 = -m0 * v * v / (2.0 * h) + m1 * u * u / (2.0 * h) - a + b;
        let d2 = (m0 * v + m1 * u) / h;
        (val, d1, d2)
    }

    pub fn point(&self, i: usize, u: f64) -> (f64, f64) {
        (self.eval(0, i, u).0, self.eval(1, i, u).0)
    }

    fn tangent(&self, i: usize, u: f64) -> (f64, f64) {
        (self.eval(0, i, u).1, self.eval(1, i, u).1)
    }

    /// Signed curvature at the start of segment `i`.
    pub fn curvature(&self, i: usize) -> f64 {
        let (_, x1, x2) = self.eval(0, i, 0.0);
        let (_, y1, y2) = self.eval(1, i, 0.0);
        (x1 * y2 - y1 * x2) / (x1 * x1 + y1 * y1).powf(1.5)
    }

    pub fn tangent_angle(&self, i: usize) -> f64 {
        let (a, b) = self.tangent(i, 0.0);
        b.atan2(a)
    }

    fn segment_length(&self, i: usize, upto: f64) -> f64 {
        let (gx, gw) = gauss_legendre(8);
        let r = 0.5 * upto;
        gx.iter()
            .zip(&gw)
            .map(|(x, w)| {
                let t = self.tangent(i, r * (1.0 + x));
                w * t.0.hypot(t.1)
            })
            .sum::<f64>()
            * r
    }

    /// Arclength at each marker, with the perimeter as the final entry.
    pub fn arclengths(&self) -> Vec<f64> {
        let m = self.segments();
        let mut s = Vec::with_capacity(m + 1);
        s.push(0.0);
        for i in 0..m {
            let h = self.knots[i + 1] - self.knots[i];
            s.push(s[i] + self.segment_length(i, h));
        }
        s
    }

    /// Enclosed signed area, `1/2 \oint x dy - y dx`, exact for the spline.
    pub fn area(&self) -> f64 {
        let (gx, gw) = gauss_legendre(4);
        let mut acc = 0.0;
        for i in 0..self.segments() {
            let h = self.knots[i + 1] - self.knots[i];
            let r = 0.5 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let u = r * (1.0 + x);
                let (p1, d1, _) = self.eval(0, i, u);
                let (p2, d2, _) = self.eval(1, i, u);
                acc += w * r * (p1 * d2 - p2 * d1);
            }
        }
        0.5 * acc
    }

    /// `m` points equally spaced in spline arclength.
    pub fn resample(&self, m: usize) -> Vec<(f64, f64)> {
        let s = self.arclengths();
        let total = *s.last().unwrap();
        (0..m)
            .map(|k| {
                let target = total * k as f64 / m as f64;
                let i = match s.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
                    Ok(i) => i.min(self.segments() - 1),
                    Err(i) => i - 1,
                };
                let h = self.knots[i + 1] - self.knots[i];
                let mut u = h * (target - s[i]) / (s[i + 1] - s[i]);
                for _ in 0..6 {
                    let t = self.tangent(i, u);
                    u -= (s[i] + self.segment_length(i, u) - target) / t.0.hypot(t.1);
                    u = u.clamp(0.0, h);
                }
                self.point(i, u)
            })
            .collect()
    }
}

impl PatchContour {
    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn spline(&self) -> ContourSpline {
        ContourSpline::new(&self.markers)
    }

    /// Area enclosed by the spline through the markers.
    pub fn area(&self) -> f64 {
        self.spline().area()
    }

    /// Shoelace area of the marker polygon.
    pub fn polygon_area(&self) -> f64 {
        let m = self.markers.len();
        0.5 * (0..m)
            .map(|i| {
                let a = self.markers[i];
                let b = self.markers[(i + 1) % m];
                a.0 * b.1 - a.1 * b.0
            })
            .sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        *self.spline().arclengths().last().unwrap()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let m = self.markers.len() as f64;
        let (a, b) = self.markers.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        (a / m, b / m)
    }

    pub fn spacing_ratio(&self) -> f64 {
        let m = self.markers.len();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..m {
            let a = self.markers[i];
            let b = self.markers[(i + 1) % m];
            let d = (b.0 - a.0).hypot(b.1 - a.1);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo
    }

    /// Resample to equal arclength spacing.
    pub fn remesh(&self) -> Self {
        let mut out = self.clone();
        out.markers = self.spline().resample(self.markers.len());
        out.remeshes += 1;
        out
    }

    /// First pair of non-adjacent crossing segments, found by sweeping in `x1`.
    pub fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let m = self.markers.len();
        let seg = |i: usize| (self.markers[i], self.markers[(i + 1) % m]);
        let mut order: Vec<usize> = (0..m).collect();
        let xmin = |i: usize| {
            let (a, b) = seg(i);
            a.0.min(b.0)
        };
        order.sort_by(|&i, &j| xmin(i).partial_cmp(&xmin(j)).unwrap());
        for (k, &i) in order.iter().enumerate() {
            let (a, b) = seg(i);
            let xmax = a.0.max(b.0);
            for &j in &order[k + 1..] {
                if xmin(j) > xmax {
                    break;
                }
                let adjacent = (i + 1) % m == j || (j + 1) % m == i || i == j;
                if adjacent {
                    continue;
                }
                let (c, d) = seg(j);
                if segments_cross(a, b, c, d) {
                    return Some((i.min(j), i.max(j)));
                }
            }
        }
        None
    }

    /// Tangent angle (unwrapped), curvature and arclength at each marker.
    pub fn geometry(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sp = self.spline();
        let s = sp.arclengths();
        let m = self.markers.len();
        let mut theta = Vec::with_capacity(m);
        let mut prev = 0.0;
        for i in 0..m {
            let mut t = sp.tangent_angle(i);
            if i > 0 {
                while t - prev > PI {
                    t -= 2.0 * PI;
                }
                while t - prev < -PI {
                    t += 2.0 * PI;
                }
            }
            theta.push(t);
            prev = t;
        }
        let kappa = (0..m).map(|i| sp.curvature(i)).collect();
        (s, theta, kappa)
    }

    /// Marker CSV with columns `s, x1, x2, theta, kappa`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let (s, theta, kappa) = self.geometry();
        writeln!(w, "s,x1,x2,theta,kappa")?;
        for (i, p) in self.markers.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", s[i], p.0, p.1, theta[i], kappa[i])?;
        }
        Ok(())
    }
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Move every marker with RK4 through `velocity` over `[t0, t1]`, remeshing when
/// the spacing ratio exceeds [`MAX_SPACING_RATIO`].
pub fn advect_contour_with(
    c: &PatchContour,
    velocity: impl Fn(f64, f64, f64) -> (f64, f64) + Sync,
    t0: f64,
    t1: f64,
    substeps: usize,
) -> Result<PatchContour> {
    let markers = advect_points(&c.markers, velocity, t0, t1, substeps);
    let mut out = c.clone();
    out.markers = markers;
    if out.spacing_ratio() > MAX_SPACING_RATIO {
        out = out.remesh();
    }
    if let Some((i, j)) = out.find_self_intersection() {
        return Err(Error::SelfIntersection(i, j));
    }
    Ok(out)
}

/// [`advect_contour_with`] using the interpolated grid velocity.
pub fn advect_contour(c: &PatchContour, series: &VelocitySeries, t0: f64, t1: f64) -> Result<PatchContour> {
    series.check_cover(t0, t1)?;
    let h = series.grid().spacing();
    let substeps = ((series.max_speed() * (t1 - t0).abs() / (0.5 * h)).ceil() as usize).max(1);
    advect_contour_with(c, |t, x1, x2| series.velocity_at(t, x1, x2), t0, t1, substeps)
}

fn inside_polygon(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let m = poly.len();
    let mut inside = false;
    let mut j = m - 1;
    for i in 0..m {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// `1 + sigma 1_Omega` on the grid; nodes are tested together with their periodic images.
pub fn rasterize_patch(c: &PatchContour, grid: &Grid2D) -> ScalarField {
    let n = grid.n();
    let l = grid.box_length();
    let (lo, hi) = c.markers.iter().fold(((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY)), |acc, p| {
        ((acc.0 .0.min(p.0), acc.0 .1.min(p.1)), (acc.1 .0.max(p.0), acc.1 .1.max(p.1)))
    });
    let data: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (x1, x2) = grid.point(idx);
            for a in -1..=1 {
                for b in -1..=1 {
                    let p = (x1 + a as f64 * l, x2 + b as f64 * l);
                    if p.0 < lo.0 || p.0 > hi.0 || p.1 < lo.1 || p.1 > hi.1 {
                        continue;
                    }
                    if inside_polygon(&c.markers, p) {
                        return 1.0 + c.sigma;
                    }
                }
            }
            1.0
        })
        .collect();
    debug_assert_eq!(data.len(), n * n);
    ScalarField {
        grid: grid.clone(),
        data,
    }
}

/// `sup |theta(s_i) - theta(s_j)| / |s_i - s_j|^gamma` over marker pairs, with the
/// tangent angle unwrapped along the shorter arc between the two markers.
pub fn c1gamma_seminorm(c: &PatchContour, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    if c.markers.len() < MIN_MARKERS {
        return Err(Error::TooFewMarkers(c.markers.len()));
    }
    let (s, theta, _) = c.geometry();
    let m = c.markers.len();
    let perimeter = s[m];
    let turning = {
        // total turning of a simple closed curve is +-2 pi
        let last = theta[m - 1];
        let mut first = theta[0];
        while first + 2.0 * PI - last > PI {
            first -= 2.0 * PI;
        }
        while first + 2.0 * PI - last < -PI {
            first += 2.0 * PI;
        }
        first + 2.0 * PI - theta[0]
    };
    let best = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in (i + 1)..m {
                let fwd = s[j] - s[i];
                let (ds, dth) = if fwd <= 0.5 * perimeter {
                    (fwd, theta[j] - theta[i])
                } else {
                    (perimeter - fwd, turning - (theta[j] - theta[i]))
                };
                best = best.max(dth.abs() / ds.powf(gamma));
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Bound on the boundary seminorm at time `t` from the deformation bounds:
/// `pi G^{1+gamma} (H + G [theta_0]_gamma)` with `G = max ||grad X^{+-1}||_inf`
/// and `H` a bound on `[grad X]_gamma`.
pub fn c1gamma_envelope(initial_seminorm: f64, gradient_bound: f64, holder_bound: f64, gamma: f64) -> f64 {
    let g = gradient_bound.max(1.0);
    PI * g.powf(1.0 + gamma) * (holder_bound + g * initial_seminorm)
}

/// Semi-axes `(major, minor)` and center of the least-squares ellipse through the markers.
pub fn fit_ellipse(c: &PatchContour) -> Result<(f64, f64, (f64, f64))> {
    let ctr = c.centroid();
    // Q = [[p, q], [q, r]], minimize sum (p dx^2 + 2 q dx dy + r dy^2 - 1)^2
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for &(x, y) in &c.markers {
        let (dx, dy) = (x - ctr.0, y - ctr.1);
        let row = [dx * dx, 2.0 * dx * dy, dy * dy];
        for a in 0..3 {
            atb[a] += row[a];
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let sol = solve3(ata, atb).ok_or_else(|| Error::InsufficientData("degenerate ellipse fit".into()))?;
    let (p, q, r) = (sol[0], sol[1], sol[2]);
    let tr = 0.5 * (p + r);
    let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let (l1, l2) = (tr - disc, tr + disc);
    if l1 <= 0.0 {
        return Err(Error::InsufficientData("fitted conic is not an ellipse".into()));
    }
    Ok((1.0 / l1.sqrt(), 1.0 / l2.sqrt(), ctr))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = ((row + 1)..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(m: usize) -> PatchContour {
        init_contour(
            Shape::Disk {
                center: (0.0, 0.0),
                radius: 1.0,
            },
            m,
            0.1,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_too_few_markers() {
        let s = Shape::Disk {
            center: (0.0, 0.0),
            radius: 1.0,
        };
        assert!(matches!(init_contour(s, 3, 0.1, 0.5), Err(Error::TooFewMarkers(3))));
    }

    #[test]
    fn disk_and_ellipse_areas() {
        assert!((disk(256).area() - PI).abs() < 1e-5);
        let e = init_contour(
            Shape::Ellipse {
                center: (1.0, 2.0),
                a: 2.0,
                b: 1.0,
            },
            256,
            0.1,
            1.0,
        )
        .unwrap();
        assert!((e.area() - 2.0 * PI).abs() < 1e-4);
        assert!(e.spacing_ratio() < 1.0 + 1e-3, "{}", e.spacing_ratio());
        // inscribed polygon has the classical O(M^-2) defect
        let m = 256.0;
        let poly = 0.5 * m * (2.0 * PI / m).sin();
        assert!((disk(256).polygon_area() - poly).abs() < 1e-12);
    }

    #[test]
    fn circle_seminorm_is_curvature() {
        let c = disk(128);
        let v = c1gamma_seminorm(&c, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
        let (_, _, kappa) = c.geometry();
        let worst = kappa.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn ellipse_seminorm_is_max_curvature() {
        let e = init_contour(
            Shape::Ellipse {
                center: (0.0, 0.0),
                a: 2.0,
                b: 1.0,
            },
            512,
            0.1,
            1.0,
        )
        .unwrap();
        let v = c1gamma_seminorm(&e, 1.0).unwrap();
        assert!((v - 2.0).abs() < 2e-2, "{v}");
    }

    #[test]
    fn zero_velocity_leaves_markers() {
        let c = disk(64);
        let d = advect_contour_with(&c, |_, _, _| (0.0, 0.0), 0.0, 1.0, 4).unwrap();
        assert_eq!(c.markers, d.markers);
    }

    #[test]
    fn shear_turns_disk_into_known_ellipse() {
        let c = disk(256);
        let t: f64 = 1.0;
        let d = advect_contour_with(&c, |_, _, y| (y, 0.0), 0.0, t, 10).unwrap();
        let (major, minor, _) = fit_ellipse(&d).unwrap();
        let root = (1.0 + t * t / 4.0).sqrt();
        let s_plus = (1.0 + t * t / 2.0 + t * root).sqrt();
        let s_minus = (1.0 + t * t / 2.0 - t * root).sqrt();
        assert!((major - s_plus).abs() < 1e-4, "{major} {s_plus}");
        assert!((minor - s_minus).abs() < 1e-4, "{minor} {s_minus}");
        assert!((d.area() - PI).abs() < 1e-6);
    }

    #[test]
    fn rigid_rotation_is_congruent() {
        let c = disk(128);
        let d = advect_contour_with(&c, |_, x, y| (-y, x), 0.0, 2.0 * PI, 600).unwrap();
        assert!((d.area() - c.area()).abs() < 1e-10);
    }

    #[test]
    fn crossing_chain_is_detected() {
        let mut c = disk(64);
        c.markers.swap(5, 40);
        assert!(c.find_self_intersection().is_some());
        assert!(disk(64).find_self_intersection().is_none());
    }

    #[test]
    fn rasterization_identities() {
        let g = Grid2D::new(64, 4.0).unwrap();
        let c = init_contour(
            Shape::Disk {
                center: (2.0, 2.0),
                radius: 1.0,
            },
            256,
            0.1,
            1.0,
        )
        .unwrap();
        let r = rasterize_patch(&c, &g);
        assert!(r.data.iter().all(|&v| v == 1.0 || v == 1.1));
        let excess = r.integral() - 16.0;
        let h = g.spacing();
        assert!((excess - 0.1 * PI).abs() <= 0.1 * PI * 2.0 * h);
        let mut neg = c.clone();
        neg.sigma = -0.1;
        let sum = r.add(&rasterize_patch(&neg, &g)).unwrap();
        assert!(sum.data.iter().all(|&v| (v - 2.0).abs() < 1e-15));
        let mut zero = c.clone();
        zero.sigma = 0.0;
        assert!(rasterize_patch(&zero, &g).data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn remesh_equalizes_spacing_and_keeps_area() {
        let c = disk(512);
        let d = advect_contour_with(&c, |_, _, y| (2.0 * y, 0.0), 0.0, 1.0, 10).unwrap();
        assert_eq!(d.remeshes, 1);
        let r = d.remesh();
        assert!(r.spacing_ratio() < 1.2, "{}", r.spacing_ratio());
        assert!((r.area() - PI).abs() < 1e-4, "{} {}", d.area(), r.area());
    }
}
