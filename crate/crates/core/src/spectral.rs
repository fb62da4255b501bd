//! Fourier-side operators on the periodic box.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Componentwise, ScalarField, Spectrum, VectorField2};
use crate::grid::Grid2D;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Which dissipation symbol the operators use.
///
/// `FullLaplacian` replaces `|k|^{2 alpha}` by `|k|^2` and exists only so the
/// verification suites can be run against a deliberately wrong operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symbol {
    Fractional,
    FullLaplacian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalParams {
    pub alpha: f64,
    pub nu: f64,
    pub symbol: Symbol,
}

impl FractionalParams {
    /// Operator-level parameters: `alpha` in `(0, 1)`, `nu > 0`.
    pub fn new(alpha: f64, nu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu = {nu} must be positive")));
        }
        Ok(Self {
            alpha,
            nu,
            symbol: Symbol::Fractional,
        })
    }

    /// Parameters accepted by full simulations: `alpha` in `(1/2, 1)`.
    pub fn for_solver(alpha: f64, nu: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} must lie in (1/2, 1) for full simulations"
            )));
        }
        Self::new(alpha, nu)
    }

    pub fn with_symbol(mut self, symbol: Symbol) -> Self {
        self.symbol = symbol;
        self
    }

    /// Exponent of `|k|` in the dissipation symbol.
    pub fn order(&self) -> f64 {
        match self.symbol {
            Symbol::Fractional => 2.0 * self.alpha,
            Symbol::FullLaplacian => 2.0,
        }
    }

    /// Dissipation rate `nu |k|^{2 alpha}` of a mode with squared wavenumber `k2`.
    pub fn rate(&self, k2: f64) -> f64 {
        if k2 == 0.0 {
            return 0.0;
        }
        self.nu * k2.powf(0.5 * self.order())
    }
}

/// `(e^z - 1) / z`, stable near zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z - 1 - z) / z^2`, stable near zero.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

fn check_exponent(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > -2.0 && beta <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(beta))
    }
}

fn mean_tolerance(f: &ScalarField) -> f64 {
    1e-12 * f.max_abs().max(f64::MIN_POSITIVE)
}

/// Apply `|k|^beta` componentwise.
pub fn fractional_laplacian<F: Componentwise>(f: &F, beta: f64) -> Result<F> {
    check_exponent(beta)?;
    f.try_map(|c| {
        if beta < 0.0 {
            let m = c.mean();
            if m.abs() > mean_tolerance(c) {
                return Err(Error::NonMeanFreeInput(m));
            }
        }
        let mut s = c.to_spectrum();
        s.apply_real(|k1, k2| {
            let k2s = k1 * k1 + k2 * k2;
            if k2s == 0.0 {
                0.0
            } else {
                k2s.powf(0.5 * beta)
            }
        });
        Ok(s.to_field())
    })
}

/// `e^{-t nu |k|^{2 alpha}}` componentwise.
pub fn heat_semigroup<F: Componentwise>(f: &F, t: f64, params: &FractionalParams) -> Result<F> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    f.try_map(|c| {
        if t == 0.0 {
            return Ok(c.clone());
        }
        let mut s = c.to_spectrum();
        s.apply_real(|k1, k2| (-t * params.rate(k1 * k1 + k2 * k2)).exp());
        Ok(s.to_field())
    })
}

/// Leray projection of a pair of component spectra, in place.
pub fn leray_spectra(s: &mut [Spectrum; 2]) {
    let grid = s[0].grid.clone();
    for idx in 0..grid.len() {
        let (k1, k2) = grid.wavevector(idx);
        let k2s = k1 * k1 + k2 * k2;
        if k2s == 0.0 {
            continue;
        }
        let a = s[0].data[idx];
        let b = s[1].data[idx];
        let d = (a * k1 + b * k2) / k2s;
        s[0].data[idx] = a - d * k1;
        s[1].data[idx] = b - d * k2;
    }
}

pub fn vector_spectra(u: &VectorField2) -> [Spectrum; 2] {
    [u.comp[0].to_spectrum(), u.comp[1].to_spectrum()]
}

pub fn vector_from_spectra(s: &[Spectrum; 2]) -> VectorField2 {
    VectorField2 {
        comp: [s[0].to_field(), s[1].to_field()],
    }
}

/// `P = Id - grad Delta^{-1} div`.
pub fn leray_project(u: &VectorField2) -> VectorField2 {
    let mut s = vector_spectra(u);
    leray_spectra(&mut s);
    vector_from_spectra(&s)
}

/// Spectral partial derivative along `axis` (0 or 1).
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let mut s = f.to_spectrum();
    partial_spectrum(&mut s, axis);
    s.to_field()
}

pub fn partial_spectrum(s: &mut Spectrum, axis: usize) {
    s.apply(|k1, k2| I * if axis == 0 { k1 } else { k2 });
}

pub fn gradient(f: &ScalarField) -> VectorField2 {
    let s = f.to_spectrum();
    let mut a = s.clone();
    let mut b = s;
    partial_spectrum(&mut a, 0);
    partial_spectrum(&mut b, 1);
    VectorField2 {
        comp: [a.to_field(), b.to_field()],
    }
}

pub fn divergence(u: &VectorField2) -> ScalarField {
    let mut a = u.comp[0].to_spectrum();
    let mut b = u.comp[1].to_spectrum();
    partial_spectrum(&mut a, 0);
    partial_spectrum(&mut b, 1);
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
    a.to_field()
}

/// Scalar curl `d1 u2 - d2 u1`.
pub fn curl(u: &VectorField2) -> ScalarField {
    let mut a = u.comp[1].to_spectrum();
    let mut b = u.comp[0].to_spectrum();
    partial_spectrum(&mut a, 0);
    partial_spectrum(&mut b, 1);
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x -= y;
    }
    a.to_field()
}

/// Full Jacobian `[[d1 u1, d2 u1], [d1 u2, d2 u2]]` as four scalar fields, row-major.
pub fn velocity_gradient(u: &VectorField2) -> [ScalarField; 4] {
    [
        partial(&u.comp[0], 0),
        partial(&u.comp[0], 1),
        partial(&u.comp[1], 0),
        partial(&u.comp[1], 1),
    ]
}

/// Mean-free solution of `Delta g = f` (the mean of `f` is ignored).
pub fn inverse_laplacian(f: &ScalarField) -> ScalarField {
    let mut s = f.to_spectrum();
    s.apply_real(|k1, k2| {
        let k2s = k1 * k1 + k2 * k2;
        if k2s == 0.0 {
            0.0
        } else {
            -1.0 / k2s
        }
    });
    s.to_field()
}

/// Velocity from vorticity: `u = (-d2 psi, d1 psi)` with `Delta psi = omega`.
pub fn biot_savart(omega: &ScalarField) -> VectorField2 {
    let s = omega.to_spectrum();
    let mut a = s.clone();
    let mut b = s;
    // psi_hat = -omega_hat / |k|^2
    a.apply(|k1, k2| {
        let k2s = k1 * k1 + k2 * k2;
        if k2s == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            I * k2 / k2s
        }
    });
    b.apply(|k1, k2| {
        let k2s = k1 * k1 + k2 * k2;
        if k2s == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            -I * k1 / k2s
        }
    });
    VectorField2 {
        comp: [a.to_field(), b.to_field()],
    }
}

pub fn dealias_spectrum(s: &mut Spectrum) {
    let grid = s.grid.clone();
    for (idx, z) in s.data.iter_mut().enumerate() {
        if !grid.keeps_mode(idx) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}

/// Spherical 2/3-rule truncation.
pub fn dealias<F: Componentwise>(f: &F) -> F {
    f.try_map(|c| {
        let mut s = c.to_spectrum();
        dealias_spectrum(&mut s);
        Ok(s.to_field())
    })
    .expect("dealiasing cannot fail")
}

/// Dealiased `u . grad f`.
pub fn advect_scalar(u: &VectorField2, f: &ScalarField) -> Result<ScalarField> {
    u.comp[0].check_grid(f)?;
    let g = gradient(f);
    let prod = u.comp[0].mul(&g.comp[0])?.add(&u.comp[1].mul(&g.comp[1])?)?;
    Ok(dealias(&prod))
}

/// Dealiased `(u . grad) v`.
pub fn advect_vector(u: &VectorField2, v: &VectorField2) -> Result<VectorField2> {
    Ok(VectorField2 {
        comp: [advect_scalar(u, &v.comp[0])?, advect_scalar(u, &v.comp[1])?],
    })
}

/// `L^2` norm of the spectral divergence.
pub fn divergence_norm(u: &VectorField2) -> f64 {
    divergence(u).l2_norm()
}

/// Check that the samples of the time series are uniform and return the step.
pub fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptySeries);
    }
    if times.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: times.len() });
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::NonuniformSpacing);
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::NonuniformSpacing);
        }
    }
    Ok(dt)
}

/// Weights `(w_a, w_b)` of `\int_a^b lam e^{-lam (b - s)} f(s) ds` for `f` linear
/// between `f(a)` and `f(b)`, as functions of `z = lam (b - a)`.
pub fn linear_exponential_weights(z: f64) -> (f64, f64) {
    if z < 1e-4 {
        (
            z * (0.5 - z * (1.0 / 3.0 - z / 8.0)),
            z * (0.5 - z * (1.0 / 6.0 - z / 24.0)),
        )
    } else {
        let g = -(-z).exp_m1() / z;
        let e = (-z).exp();
        (g - e, 1.0 - g)
    }
}

/// `\int_0^{t_m} e^{-(t_m - s) nu Lambda^{2 alpha}} nu Lambda^{2 alpha} f(s) ds` for samples
/// `f(t_0), ..., f(t_m)` at uniform times, integrating the exponential exactly
/// against the piecewise-linear interpolant of each Fourier coefficient.
pub fn maximal_operator_a2alpha<F: Componentwise>(
    series: &[F],
    times: &[f64],
    params: &FractionalParams,
) -> Result<F> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if series.len() != times.len() {
        return Err(Error::InvalidParameter("series and times differ in length".into()));
    }
    let h = uniform_step(times)?;
    let m = series.len() - 1;
    let template = &series[m];
    template.try_map(|last| {
        let comp_idx = template
            .components()
            .iter()
            .position(|c| std::ptr::eq(*c, last))
            .unwrap_or(0);
        let grid = last.grid.clone();
        let spectra: Vec<Spectrum> = series
            .iter()
            .map(|f| f.components()[comp_idx].to_spectrum())
            .collect();
        let mut out = Spectrum::zeros(&grid);
        for idx in 0..grid.len() {
            let (k1, k2) = grid.wavevector(idx);
            let lam = params.rate(k1 * k1 + k2 * k2);
            if lam == 0.0 {
                continue;
            }
            let (wa, wb) = linear_exponential_weights(lam * h);
            let decay = (-lam * h).exp();
            // Horner-style accumulation of the per-interval contributions.
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..m {
                acc = acc * decay + spectra[j].data[idx] * wa + spectra[j + 1].data[idx] * wb;
            }
            out.data[idx] = acc;
        }
        Ok(out.to_field())
    })
}

/// Spectral grid helper for tests and probes: single Fourier mode `cos(k . x)`.
pub fn cosine_mode(grid: &Grid2D, m1: i64, m2: i64) -> ScalarField {
    let k0 = grid.k0();
    ScalarField::from_fn(grid, |x1, x2| (k0 * (m1 as f64 * x1 + m2 as f64 * x2)).cos())
}

/// Spectral `d_1^{n1} d_2^{n2} f`.
pub fn mixed_partial(f: &ScalarField, n1: u32, n2: u32) -> ScalarField {
    let mut s = f.to_spectrum();
    let g = f.grid.clone();
    for (idx, z) in s.data.iter_mut().enumerate() {
        let (k1, k2) = g.wavevector(idx);
        *z *= Complex64::new(0.0, k1).powu(n1) * Complex64::new(0.0, k2).powu(n2);
    }
    s.to_field()
}

/// Trigonometric interpolant of `f` evaluated at arbitrary points.
pub fn evaluate_at(f: &ScalarField, points: &[(f64, f64)]) -> Vec<f64> {
    let g = &f.grid;
    let n = g.n();
    let s = f.to_spectrum();
    let scale = 1.0 / g.len() as f64;
    let k0 = g.k0();
    points
        .par_iter()
        .map(|&(x1, x2)| {
            let row: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, g.mode(i) as f64 * k0 * x1)).collect();
            let col: Vec<Complex64> = (0..n).map(|j| Complex64::from_polar(1.0, g.mode(j) as f64 * k0 * x2)).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let line = &s.data[i * n..(i + 1) * n];
                let inner: Complex64 = line.iter().zip(&col).map(|(a, b)| a * b).sum();
                acc += row[i] * inner;
            }
            acc.re * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g64() -> Grid2D {
        Grid2D::new(64, 2.0 * PI).unwrap()
    }

    fn rel(a: &ScalarField, b: &ScalarField) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm().max(1e-300)
    }

    #[test]
    fn fractional_laplacian_on_single_mode() {
        let g = g64();
        let f = cosine_mode(&g, 3, 4);
        let out = fractional_laplacian(&f, 1.5).unwrap();
        assert!(rel(&out, &f.scale(11.180339887498949)) < 1e-12);
        let c = ScalarField::constant(&g, 2.0);
        assert!(fractional_laplacian(&c, 1.0).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn fractional_laplacian_rejects_bad_input() {
        let g = g64();
        let c = ScalarField::constant(&g, 2.0);
        assert!(matches!(fractional_laplacian(&c, -0.5), Err(Error::NonMeanFreeInput(_))));
        assert!(matches!(fractional_laplacian(&c, 2.5), Err(Error::InvalidExponent(_))));
        assert!(matches!(fractional_laplacian(&c, -2.0), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn heat_factor_on_single_mode() {
        let g = g64();
        let p = FractionalParams::new(0.75, 1.0).unwrap();
        let f = cosine_mode(&g, 3, 4);
        let out = heat_semigroup(&f, 0.1, &p).unwrap();
        let factor = (-0.1 * 5f64.powf(1.5)).exp();
        assert!((factor - 0.3269219).abs() < 1e-7);
        assert!(rel(&out, &f.scale(factor)) < 1e-12);
        assert_eq!(heat_semigroup(&f, 0.0, &p).unwrap(), f);
        assert!(matches!(heat_semigroup(&f, -1.0, &p), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn leray_keeps_curl_part_of_helmholtz_sum() {
        let g = g64();
        let phi = ScalarField::from_fn(&g, |x, y| (2.0 * x).sin() * y.cos() + (x + 3.0 * y).cos());
        let psi = ScalarField::from_fn(&g, |x, y| (x - y).sin() + 0.5 * (3.0 * x).cos() * (2.0 * y).sin());
        let grad = gradient(&phi);
        let dpsi = gradient(&psi);
        let curl_part = VectorField2::new(dpsi.comp[1].scale(-1.0), dpsi.comp[0].clone()).unwrap();
        let out = leray_project(&grad.add(&curl_part).unwrap());
        assert!(out.sub(&curl_part).unwrap().l2_norm() < 1e-12 * curl_part.l2_norm());
        assert!(leray_project(&grad).l2_norm() < 1e-12 * grad.l2_norm());
        assert!(divergence_norm(&out) < 1e-11 * out.l2_norm());
    }

    #[test]
    fn biot_savart_inverts_curl() {
        let g = g64();
        let omega = ScalarField::from_fn(&g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
        let u = biot_savart(&omega);
        assert!(rel(&curl(&u), &omega) < 1e-12);
        assert!(divergence_norm(&u) < 1e-12);
    }

    #[test]
    fn maximal_operator_constant_in_time() {
        let g = g64();
        let p = FractionalParams::new(0.75, 1.0).unwrap();
        let f = cosine_mode(&g, 2, 0);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let series = vec![f.clone(); times.len()];
        let out = maximal_operator_a2alpha(&series, &times, &p).unwrap();
        let factor = 1.0 - (-(2f64.powf(1.5))).exp();
        assert!((factor - 0.9408943).abs() < 1e-7);
        assert!(rel(&out, &f.scale(factor)) < 1e-12);
    }

    #[test]
    fn maximal_operator_on_linear_ramp_matches_closed_form() {
        // f(s) = s cos(x): \int_0^t lam e^{-lam(t-s)} s ds = t - (1 - e^{-lam t}) / lam
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let p = FractionalParams::new(0.6, 0.7).unwrap();
        let base = cosine_mode(&g, 1, 0);
        let times: Vec<f64> = (0..=7).map(|i| i as f64 * 0.1).collect();
        let series: Vec<ScalarField> = times.iter().map(|&t| base.scale(t)).collect();
        let out = maximal_operator_a2alpha(&series, &times, &p).unwrap();
        let lam: f64 = 0.7;
        let t = 0.7;
        let expect = t - (1.0 - (-lam * t).exp()) / lam;
        assert!(rel(&out, &base.scale(expect)) < 1e-12);
    }

    #[test]
    fn maximal_operator_errors() {
        let p = FractionalParams::new(0.75, 1.0).unwrap();
        let g = Grid2D::new(8, 1.0).unwrap();
        let f = ScalarField::zeros(&g);
        let empty: Vec<ScalarField> = vec![];
        assert!(matches!(maximal_operator_a2alpha(&empty, &[], &p), Err(Error::EmptySeries)));
        let r = maximal_operator_a2alpha(&[f.clone(), f.clone(), f], &[0.0, 0.1, 0.3], &p);
        assert!(matches!(r, Err(Error::NonuniformSpacing)));
    }

    #[test]
    fn phi_functions_are_continuous_across_the_switch() {
        for &z in &[-1e-3f64, 1e-3] {
            let a = phi1(z * 0.999_999);
            let b = phi1(z * 1.000_001);
            assert!((a - b).abs() < 1e-8);
            let a = phi2(z * 0.999_999);
            let b = phi2(z * 1.000_001);
            assert!((a - b).abs() < 1e-8);
        }
        assert!((phi1(-2.0) - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_partial_and_point_evaluation() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (2.0 * x + 3.0 * y).sin());
        let d = mixed_partial(&f, 2, 1);
        let oracle = ScalarField::from_fn(&g, |x, y| -12.0 * (2.0 * x + 3.0 * y).cos());
        assert!(d.sub(&oracle).unwrap().max_abs() < 1e-10);
        let pts = [(0.123, 4.5), (6.0, -1.0), (g.spacing() * 3.0, 0.0)];
        let vals = evaluate_at(&f, &pts);
        for (p, v) in pts.iter().zip(&vals) {
            assert!((v - (2.0 * p.0 + 3.0 * p.1).sin()).abs() < 1e-12);
        }
    }
}
