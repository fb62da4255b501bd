//! Littlewood-Paley blocks, Besov and Chemin-Lerner norms, and the
//! finite-difference, semigroup and multiplier characterizations.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ScalarField, Spectrum};
use crate::grid::Grid2D;
use crate::sample;
use crate::spectral::FractionalParams;

/// Integrability exponent in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `l^r` / `L^r` combination of nonnegative terms with weights.
    fn combine(self, terms: impl Iterator<Item = (f64, f64)>) -> f64 {
        match self {
            Exponent::Infinite => terms.fold(0.0, |m, (v, _)| m.max(v)),
            Exponent::Finite(r) => {
                let items: Vec<(f64, f64)> = terms.collect();
                let big = items.iter().fold(0.0f64, |m, (v, _)| m.max(*v));
                if big == 0.0 {
                    return 0.0;
                }
                let s: f64 = items.iter().map(|(v, w)| w * (v / big).powf(r)).sum();
                big * s.powf(1.0 / r)
            }
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Exponent::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad integrability exponent `{s}`")))?;
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("exponent {v} must lie in [1, inf]")));
        }
        Ok(Exponent::Finite(v))
    }
}

fn smooth_zero(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Low-frequency cutoff: 1 on `|xi| <= 3/4`, 0 on `|xi| >= 4/3`, smooth between.
pub fn chi(xi: f64) -> f64 {
    let x = (xi.abs() - 0.75) / (4.0 / 3.0 - 0.75);
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let a = smooth_zero(1.0 - x);
    a / (a + smooth_zero(x))
}

/// Annular profile `chi(xi / 2) - chi(xi)`, supported in `3/4 <= |xi| <= 8/3`.
pub fn phi(xi: f64) -> f64 {
    chi(0.5 * xi) - chi(xi)
}

/// Range of dyadic shells acting on physical wavenumbers `|k|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadicPartition {
    pub j_min: i32,
    pub j_max: i32,
}

impl DyadicPartition {
    /// Smallest range whose shells sum to one on every nonzero lattice mode.
    pub fn covering(grid: &Grid2D) -> Self {
        let k_lo = grid.k0();
        let k_hi = grid.max_wavenumber();
        Self {
            j_min: (0.75 * k_lo).log2().floor() as i32,
            j_max: (4.0 * k_hi / 3.0).log2().ceil() as i32 - 1,
        }
    }

    pub fn new(j_min: i32, j_max: i32) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::InvalidParameter(format!("empty shell range [{j_min}, {j_max}]")));
        }
        Ok(Self { j_min, j_max })
    }

    pub fn shells(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    /// Weight of shell `j` at wavenumber `k`.
    pub fn weight(&self, j: i32, k: f64) -> f64 {
        phi(k * 2f64.powi(-j))
    }

    fn check(&self, j: i32) -> Result<()> {
        if j < self.j_min || j > self.j_max {
            Err(Error::ShellOutOfRange {
                j,
                min: self.j_min,
                max: self.j_max,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesovParams {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
    pub partition: DyadicPartition,
}

impl BesovParams {
    pub fn new(s: f64, p: Exponent, r: Exponent, partition: DyadicPartition) -> Self {
        Self { s, p, r, partition }
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }
}

fn filtered(spec: &Spectrum, w: impl Fn(f64) -> f64) -> ScalarField {
    let mut s = spec.clone();
    s.apply_real(|k1, k2| w((k1 * k1 + k2 * k2).sqrt()));
    s.to_field()
}

/// Littlewood-Paley block `phi(2^{-j} D) f`.
pub fn dyadic_block(f: &ScalarField, j: i32, partition: &DyadicPartition) -> Result<ScalarField> {
    partition.check(j)?;
    Ok(filtered(&f.to_spectrum(), |k| partition.weight(j, k)))
}

/// `(j, ||Delta_j f||_{L^p})` for every shell of the partition.
pub fn shell_norms(f: &ScalarField, partition: &DyadicPartition, p: Exponent) -> Vec<(i32, f64)> {
    let spec = f.to_spectrum();
    let shells: Vec<i32> = partition.shells().collect();
    shells
        .par_iter()
        .map(|&j| (j, filtered(&spec, |k| partition.weight(j, k)).lp_norm(p.value())))
        .collect()
}

/// `|| 2^{js} ||Delta_j f||_{L^p} ||_{l^r}`.
pub fn besov_norm(f: &ScalarField, bp: &BesovParams) -> f64 {
    let norms = shell_norms(f, &bp.partition, bp.p);
    bp.r.combine(norms.into_iter().map(|(j, v)| (2f64.powf(j as f64 * bp.s) * v, 1.0)))
}

/// Trapezoid weights for uniform time samples on `[t_0, t_m]`.
fn time_weights(times: &[f64]) -> Result<Vec<f64>> {
    let dt = crate::spectral::uniform_step(times)?;
    let m = times.len();
    Ok((0..m)
        .map(|i| if i == 0 || i == m - 1 { 0.5 * dt } else { dt })
        .collect())
}

fn time_norm(values: &[f64], weights: &[f64], q: Exponent) -> f64 {
    q.combine(values.iter().zip(weights).map(|(v, w)| (*v, *w)))
}

/// Chemin-Lerner norm: the `L^q_T` norm is taken inside the dyadic sum.
pub fn chemin_lerner_norm(series: &[ScalarField], times: &[f64], bp: &BesovParams, q: Exponent) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let per_time: Vec<Vec<(i32, f64)>> = series.iter().map(|f| shell_norms(f, &bp.partition, bp.p)).collect();
    let weights = if series.len() == 1 {
        vec![1.0]
    } else {
        time_weights(times)?
    };
    let shells = per_time[0].len();
    let terms: Vec<(f64, f64)> = (0..shells)
        .map(|i| {
            let j = per_time[0][i].0;
            let vals: Vec<f64> = per_time.iter().map(|v| v[i].1).collect();
            (2f64.powf(j as f64 * bp.s) * time_norm(&vals, &weights, q), 1.0)
        })
        .collect();
    Ok(bp.r.combine(terms.into_iter()))
}

/// Standard ordering `|| ||f(t)||_{B^s_{p,r}} ||_{L^q_T}`.
pub fn lq_besov_norm(series: &[ScalarField], times: &[f64], bp: &BesovParams, q: Exponent) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let vals: Vec<f64> = series.iter().map(|f| besov_norm(f, bp)).collect();
    let weights = if series.len() == 1 {
        vec![1.0]
    } else {
        time_weights(times)?
    };
    Ok(time_norm(&vals, &weights, q))
}

/// Largest `|k|` carrying a coefficient above rounding level.
fn spectral_extent(spec: &Spectrum) -> f64 {
    let big = spec.data.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut kmax = 0.0f64;
    for (idx, z) in spec.data.iter().enumerate() {
        if z.norm() > 1e-13 * big {
            let (k1, k2) = spec.grid.wavevector(idx);
            kmax = kmax.max((k1 * k1 + k2 * k2).sqrt());
        }
    }
    kmax
}

/// `||f(. + y) - f||_{L^p}` for `y = rho (cos t, sin t)` by spectral translation.
fn difference_norm(spec: &Spectrum, f: &ScalarField, y: (f64, f64), p: f64) -> f64 {
    let mut s = spec.clone();
    s.apply(|k1, k2| num_complex::Complex64::from_polar(1.0, k1 * y.0 + k2 * y.1) - 1.0);
    let _ = f;
    s.to_field().lp_norm(p)
}

/// Finite-difference characterization for `s` in `(0, 1)`:
/// `|| ||f(. + y) - f||_{L^p} / |y|^s ||_{L^r(dy / |y|^2)}`.
///
/// The radial integral runs over geometric radii from well inside the linear
/// regime out to the box side; the inner tail uses the gradient limit and the
/// outer tail uses the cell average of the (periodic) difference norm.
pub fn fd_besov_norm(f: &ScalarField, bp: &BesovParams) -> Result<f64> {
    let s = bp.s;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::SOutOfRange(s));
    }
    let p = bp.p.value();
    let grid = &f.grid;
    let spec = f.to_spectrum();
    let kmax = spectral_extent(&spec);
    if kmax == 0.0 {
        return Ok(0.0);
    }
    let rho_min = 1e-3 / kmax;
    let rho_max = grid.box_length();
    let per_octave = 8;
    let steps = ((rho_max / rho_min).log2() * per_octave as f64).ceil() as usize;
    let du = (rho_max / rho_min).ln() / steps as f64;
    let radii: Vec<f64> = (0..=steps).map(|i| rho_min * (i as f64 * du).exp()).collect();

    // D(rho, theta) is even in theta -> theta + pi, so half the circle suffices.
    let angular = |rho: f64| -> Vec<f64> {
        let m = (2.0 * rho * kmax).ceil() as usize + 24;
        (0..m)
            .map(|i| {
                let t = PI * i as f64 / m as f64;
                difference_norm(&spec, f, (rho * t.cos(), rho * t.sin()), p)
            })
            .collect()
    };
    let samples: Vec<Vec<f64>> = radii.par_iter().map(|&rho| angular(rho)).collect();

    // Inner tail: D ~ rho |theta . grad f|, so D / rho^s ~ rho^{1-s} g(theta).
    let g_inner: Vec<f64> = samples[0].iter().map(|d| d / rho_min).collect();
    // Outer tail: replace D by its average over translations in the cell.
    let cell_avg = cell_average_difference(&spec, f, p, bp.r);

    match bp.r {
        Exponent::Infinite => {
            let mut sup = 0.0f64;
            for (rho, row) in radii.iter().zip(&samples) {
                for d in row {
                    sup = sup.max(d / rho.powf(s));
                }
            }
            Ok(sup)
        }
        Exponent::Finite(r) => {
            let mut total = 0.0;
            for (i, (rho, row)) in radii.iter().zip(&samples).enumerate() {
                let w = if i == 0 || i == steps { 0.5 * du } else { du };
                let ang: f64 = row.iter().map(|d| (d / rho.powf(s)).powf(r)).sum::<f64>() * (2.0 * PI / row.len() as f64);
                total += w * ang;
            }
            let inner: f64 = g_inner.iter().map(|g| g.powf(r)).sum::<f64>() * (2.0 * PI / g_inner.len() as f64)
                * rho_min.powf((1.0 - s) * r)
                / ((1.0 - s) * r);
            let outer = 2.0 * PI * cell_avg * rho_max.powf(-s * r) / (s * r);
            Ok((total + inner + outer).powf(1.0 / r))
        }
    }
}

/// Mean of `D(y)^r` over translations `y` on a coarse lattice of the cell.
fn cell_average_difference(spec: &Spectrum, f: &ScalarField, p: f64, r: Exponent) -> f64 {
    let r = match r {
        Exponent::Finite(r) => r,
        Exponent::Infinite => return 0.0,
    };
    let grid = &f.grid;
    let m = 16usize;
    let step = grid.box_length() / m as f64;
    let vals: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|i| {
            let y = ((i / m) as f64 * step + 0.37 * step, (i % m) as f64 * step + 0.61 * step);
            difference_norm(spec, f, y, p).powf(r)
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Semigroup characterization of the negative-index norm `B^{-s}_{p,r}`, `s > 0`:
/// `|| t^{s / 2 alpha} ||e^{-t nu Lambda^{2 alpha}} f||_{L^p} ||_{L^r(dt / t)}`.
///
/// Time is measured in units of `nu`, so the quantity scales like the dyadic norm
/// multiplied by `nu^{s / 2 alpha}`.
pub fn semigroup_besov_norm(f: &ScalarField, s: f64, p: Exponent, r: Exponent, params: &FractionalParams) -> Result<f64> {
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::SOutOfRange(s));
    }
    let spec = f.to_spectrum();
    let kmax = spectral_extent(&spec);
    if kmax == 0.0 {
        return Ok(0.0);
    }
    let grid = &f.grid;
    let k_lo = grid.k0();
    let t_min = 1e-4 / params.rate(kmax * kmax);
    let t_max = 40.0 / params.rate(k_lo * k_lo);
    let per_octave = 8;
    let steps = ((t_max / t_min).log2() * per_octave as f64).ceil() as usize;
    let du = (t_max / t_min).ln() / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| t_min * (i as f64 * du).exp()).collect();
    let a = s / (2.0 * params.alpha);
    let vals: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let mut sp = spec.clone();
            sp.apply_real(|k1, k2| (-t * params.rate(k1 * k1 + k2 * k2)).exp());
            t.powf(a) * sp.to_field().lp_norm(p.value())
        })
        .collect();
    match r {
        Exponent::Infinite => Ok(vals.iter().copied().fold(0.0, f64::max)),
        Exponent::Finite(r) => {
            let body: f64 = vals
                .iter()
                .enumerate()
                .map(|(i, v)| v.powf(r) * if i == 0 || i == steps { 0.5 * du } else { du })
                .sum();
            let head = f.lp_norm(p.value()).powf(r) * t_min.powf(a * r) / (a * r);
            Ok((body + head).powf(1.0 / r))
        }
    }
}

/// Seeded dictionary of random band-limited probes, each with unit Besov norm.
pub fn probe_dictionary(grid: &Grid2D, bp: &BesovParams, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = sample::rng(seed);
    let top = grid.n() as f64 / 3.0;
    (0..count)
        .map(|i| {
            // Alternate between low, middle and broad bands.
            let (lo, hi) = match i % 3 {
                0 => (1.0, 4.0),
                1 => (3.0, 0.5 * top),
                _ => (1.0, top),
            };
            let f = sample::band_limited(grid, lo, hi, 0.5, &mut rng);
            let nrm = besov_norm(&f, bp);
            f.scale(1.0 / nrm)
        })
        .collect()
}

/// `max_phi ||a phi||_{B^s_{p,r}}` over a unit-norm dictionary: a lower bound of
/// the multiplier norm of `a`.
pub fn multiplier_norm_lower_bound(a: &ScalarField, bp: &BesovParams, probes: &[ScalarField]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let vals: Result<Vec<f64>> = probes
        .par_iter()
        .map(|phi| Ok(besov_norm(&a.mul(phi)?, bp)))
        .collect();
    Ok(vals?.into_iter().fold(0.0, f64::max))
}

/// `||Lambda^s f||_{L^2}` computed spectrally.
pub fn sobolev_norm(f: &ScalarField, s: f64) -> f64 {
    let mut spec = f.to_spectrum();
    spec.apply_real(|k1, k2| {
        let k2s = k1 * k1 + k2 * k2;
        if k2s == 0.0 {
            0.0
        } else {
            k2s.powf(0.5 * s)
        }
    });
    spec.l2_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::cosine_mode;

    fn setup() -> (Grid2D, DyadicPartition) {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let part = DyadicPartition::covering(&g);
        (g, part)
    }

    #[test]
    fn profiles_have_the_stated_supports() {
        assert_eq!(chi(0.75), 1.0);
        assert_eq!(chi(4.0 / 3.0), 0.0);
        assert_eq!(phi(0.74), 0.0);
        assert_eq!(phi(8.0 / 3.0 + 1e-12), 0.0);
        assert!(phi(1.5) > 0.0);
    }

    #[test]
    fn partition_of_unity_on_the_lattice() {
        let (g, part) = setup();
        for idx in 1..g.len() {
            let (k1, k2) = g.wavevector(idx);
            let k = (k1 * k1 + k2 * k2).sqrt();
            let sum: f64 = part.shells().map(|j| part.weight(j, k)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "k={k} sum={sum}");
            let active = part.shells().filter(|&j| part.weight(j, k) > 0.0).count();
            assert!(active <= 2);
        }
    }

    #[test]
    fn block_of_mode_inside_a_single_shell() {
        let (g, part) = setup();
        // |k| = 3 = 2^1 * 1.5 and phi(1.5) = 1 because chi(0.75) = 1 and chi(1.5) = 0.
        let f = cosine_mode(&g, 3, 0);
        let b = dyadic_block(&f, 1, &part).unwrap();
        assert!(b.sub(&f).unwrap().max_abs() < 1e-13);
        for j in part.shells().filter(|&j| j != 1) {
            assert!(dyadic_block(&f, j, &part).unwrap().max_abs() < 1e-13);
        }
        assert!(matches!(dyadic_block(&f, part.j_max + 1, &part), Err(Error::ShellOutOfRange { .. })));
    }

    #[test]
    fn two_shell_norm_of_a_mode() {
        let (g, part) = setup();
        let f = cosine_mode(&g, 2, 0);
        let bp = BesovParams::new(0.7, Exponent::Finite(3.0), Exponent::Finite(2.0), part);
        let cos_lp = f.lp_norm(3.0);
        let expect: f64 = [0, 1]
            .iter()
            .map(|&j| (2f64.powf(j as f64 * 0.7) * phi(2.0 * 2f64.powi(-j)) * cos_lp).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((besov_norm(&f, &bp) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinite);
        assert_eq!("2".parse::<Exponent>().unwrap(), Exponent::Finite(2.0));
        assert!("0.5".parse::<Exponent>().is_err());
    }

    #[test]
    fn chemin_lerner_of_constant_series_with_sup_in_time() {
        let (g, part) = setup();
        let f = cosine_mode(&g, 1, 2);
        let bp = BesovParams::new(0.5, Exponent::Finite(2.0), Exponent::Finite(1.0), part);
        let times = [0.0, 0.5, 1.0];
        let v = chemin_lerner_norm(&[f.clone(), f.clone(), f.clone()], &times, &bp, Exponent::Infinite).unwrap();
        assert!((v - besov_norm(&f, &bp)).abs() < 1e-13);
        assert!(matches!(chemin_lerner_norm(&[], &[], &bp, Exponent::Infinite), Err(Error::EmptySeries)));
    }

    #[test]
    fn fd_norm_rejects_s_outside_unit_interval() {
        let (g, part) = setup();
        let f = cosine_mode(&g, 1, 0);
        let bp = BesovParams::new(1.2, Exponent::Finite(2.0), Exponent::Finite(2.0), part);
        assert!(matches!(fd_besov_norm(&f, &bp), Err(Error::SOutOfRange(_))));
        let zero = ScalarField::zeros(&g);
        assert_eq!(fd_besov_norm(&zero, &bp.with_s(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn fd_norm_of_single_mode_matches_closed_form() {
        // For p = r = 2 and f = cos(k.x): D(y)^2 = 2 (1 - cos(k.y)) ||f||^2, and
        // \int_{R^2} 2 (1 - cos(k.y)) |y|^{-2 - 2s} dy = 2 |k|^{2s} \int_0^{2pi} |cos t|^{2s} dt
        //   * \int_0^inf (1 - cos x) x^{-1-2s} dx.
        // The torus only changes the far field, which the outer tail models; with s = 0.5
        // the closed form is 4 pi |k| ||f||^2.
        let g = Grid2D::new(32, 2.0 * PI * 4.0).unwrap();
        let part = DyadicPartition::covering(&g);
        let f = cosine_mode(&g, 8, 0);
        let k = 8.0 * g.k0();
        let bp = BesovParams::new(0.5, Exponent::Finite(2.0), Exponent::Finite(2.0), part);
        let v = fd_besov_norm(&f, &bp).unwrap();
        let exact = (4.0 * PI * k).sqrt() * f.l2_norm();
        assert!(((v - exact) / exact).abs() < 2e-2, "{v} {exact}");
    }

    #[test]
    fn semigroup_norm_of_single_mode() {
        // ||e^{-t lam} f|| t^{a}, \int_0^inf t^{2a} e^{-2 lam t} dt/t = Gamma(2a) (2 lam)^{-2a}
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let f = cosine_mode(&g, 2, 0);
        let params = FractionalParams::new(0.75, 1.0).unwrap();
        let s = 0.6;
        let a = s / 1.5;
        let lam = 2f64.powf(1.5);
        let v = semigroup_besov_norm(&f, s, Exponent::Finite(2.0), Exponent::Finite(2.0), &params).unwrap();
        let exact = f.l2_norm() * (statrs::function::gamma::gamma(2.0 * a) * (2.0 * lam).powf(-2.0 * a)).sqrt();
        assert!(((v - exact) / exact).abs() < 1e-6, "{v} {exact}");
    }

    #[test]
    fn constant_multiplier_has_exact_norm() {
        let (g, part) = setup();
        let bp = BesovParams::new(0.1, Exponent::Finite(8.0), Exponent::Finite(2.0), part);
        let probes = probe_dictionary(&g, &bp, 6, 3);
        let a = ScalarField::constant(&g, -0.3);
        let v = multiplier_norm_lower_bound(&a, &bp, &probes).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        assert!(matches!(multiplier_norm_lower_bound(&a, &bp, &[]), Err(Error::EmptyDictionary)));
    }
}
