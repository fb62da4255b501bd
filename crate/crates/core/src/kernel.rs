//! Radial profile of the fractional heat kernel and the Gamma-function constants
//! of the singular-integral representations.

use std::f64::consts::PI;

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::adaptive;

/// Bessel function `J0`.
///
/// Small arguments use the trapezoid rule on `(1/pi) \int_0^pi cos(x sin s) ds`,
/// which converges geometrically for this periodic integrand; large arguments use
/// the Hankel asymptotic expansion, truncated at its smallest term.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        let m = 48;
        let h = PI / m as f64;
        let mut s = 0.5 * (1.0 + (x * PI.sin()).cos());
        for j in 1..m {
            s += (x * (j as f64 * h).sin()).cos();
        }
        return s / m as f64;
    }
    // a_k = prod_{j=1..k} (-(2j-1)^2) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0f64;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= -odd * odd / (k as f64 * 8.0 * x);
        }
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    // J0 = sqrt(2/(pi x)) [P cos(x - pi/4) - Q sin(x - pi/4)]
    let ph = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * ph.cos() - q * ph.sin())
}

/// `K_t(r) = (2 pi)^{-d} \int e^{i x . xi} e^{-t |xi|^{2 alpha}} d xi` at `|x| = r`.
pub fn kernel_profile(radii: &[f64], alpha: f64, t: f64, d: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("dimension {d} must be 1, 2 or 3")));
    }
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    radii
        .par_iter()
        .map(|&r| kernel_at(r.abs(), alpha, t, d))
        .collect()
}

fn kernel_at(r: f64, alpha: f64, t: f64, d: usize) -> Result<f64> {
    let two_a = 2.0 * alpha;
    // e^{-t Xi^{2 alpha}} = e^{-37} < 1e-16
    let xi_max = (37.0 / t).powf(1.0 / two_a);
    let decay = move |xi: f64| (-t * xi.powf(two_a)).exp();
    // Scale of the integrand, \int xi^{d-1} e^{-t xi^{2a}} d xi.
    let scale = gamma(d as f64 / two_a) / (two_a * t.powf(d as f64 / two_a));
    let tol = 1e-14 * scale;
    let (integrand, prefactor): (Box<dyn Fn(f64) -> f64 + Sync>, f64) = match d {
        1 => (Box::new(move |xi| (r * xi).cos() * decay(xi)), 1.0 / PI),
        2 => (
            Box::new(move |xi| xi * bessel_j0(r * xi) * decay(xi)),
            1.0 / (2.0 * PI),
        ),
        _ => {
            if r == 0.0 {
                (Box::new(move |xi| xi * xi * decay(xi)), 1.0 / (2.0 * PI * PI))
            } else {
                (
                    Box::new(move |xi| xi * (r * xi).sin() * decay(xi)),
                    1.0 / (2.0 * PI * PI * r),
                )
            }
        }
    };
    // Panels of at most half an oscillation, with the first panel refined adaptively
    // near the non-smooth point xi = 0.
    let panels = ((r * xi_max / PI).ceil() as usize).clamp(1, 200_000);
    let width = xi_max / panels as f64;
    let f = |x: f64| integrand(x);
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 * width;
        total += adaptive(&f, a, a + width, tol / panels as f64 + 1e-300)?;
    }
    Ok(prefactor * total)
}

/// Constant of the singular-integral form of `d_i Lambda^{2 alpha - 2}` in dimension `d`:
/// `(d + 2 alpha - 2) Gamma(d/2 - 1 + alpha) / (pi^{d/2} 2^{2 - 2 alpha} Gamma(1 - alpha))`.
pub fn riesz_gradient_constant(alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    (d + 2.0 * alpha - 2.0) * gamma(0.5 * d - 1.0 + alpha)
        / (PI.powf(0.5 * d) * 2f64.powf(2.0 - 2.0 * alpha) * gamma(1.0 - alpha))
}

/// Planar constant of the Lagrangian form of `Lambda^{2 alpha}`:
/// `alpha 4^alpha Gamma(alpha) / (2 pi Gamma(1 - alpha))`.
pub fn planar_dissipation_constant(alpha: f64) -> f64 {
    alpha * 4f64.powf(alpha) * gamma(alpha) / (2.0 * PI * gamma(1.0 - alpha))
}

/// Summary of the decay check `|K(r)| (1 + r)^{d + 2 alpha}` on a radius grid.
#[derive(Clone, Debug)]
pub struct DecayCheck {
    pub sup: f64,
    /// Largest relative increase of the weighted profile over the tail half.
    pub tail_max_increase: f64,
    pub tail_nonincreasing: bool,
}

pub fn kernel_decay_check(radii: &[f64], profile: &[f64], alpha: f64, d: usize) -> DecayCheck {
    let weighted: Vec<f64> = radii
        .iter()
        .zip(profile)
        .map(|(r, k)| k.abs() * (1.0 + r).powf(d as f64 + 2.0 * alpha))
        .collect();
    let sup = weighted.iter().copied().fold(0.0, f64::max);
    let start = weighted.len() / 2;
    let mut inc = 0.0f64;
    for w in weighted[start..].windows(2) {
        inc = inc.max((w[1] - w[0]) / w[0].abs().max(1e-300));
    }
    DecayCheck {
        sup,
        tail_max_increase: inc,
        tail_nonincreasing: inc <= 1e-6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_reference_values() {
        // Abramowitz-Stegun tables
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-14);
        assert!((bessel_j0(2.404_825_557_695_773)).abs() < 1e-14);
        // continuity across the switch to the asymptotic branch
        let a = bessel_j0(25.0 - 1e-12);
        let b = bessel_j0(25.0 + 1e-12);
        assert!((a - b).abs() < 1e-12, "{a} {b}");
        assert!((bessel_j0(30.0) + 0.086_367_983_581_040_2).abs() < 1e-13);
    }

    #[test]
    fn poisson_kernel_in_the_plane() {
        let radii = [0.0, 0.5, 1.0, 3.0, 10.0];
        let k = kernel_profile(&radii, 0.5, 1.0, 2).unwrap();
        for (r, v) in radii.iter().zip(&k) {
            let exact = (1.0 + r * r).powf(-1.5) / (2.0 * PI);
            assert!(((v - exact) / exact).abs() < 1e-8, "r={r} {v} {exact}");
        }
        assert!((k[0] - 0.159155).abs() < 1e-6);
        assert!((k[2] - 0.056269).abs() < 1e-6);
    }

    #[test]
    fn cauchy_kernel_on_the_line_and_gaussian_in_space() {
        // alpha = 1/2, d = 1: (1/pi) / (1 + r^2)
        let k = kernel_profile(&[0.0, 2.0], 0.5, 1.0, 1).unwrap();
        assert!((k[1] - 1.0 / (PI * 5.0)).abs() < 1e-10);
        // alpha = 1/2, d = 3: (1/pi^2) / (1 + r^2)^2
        let k = kernel_profile(&[0.0, 1.5], 0.5, 1.0, 3).unwrap();
        assert!((k[0] - 1.0 / (PI * PI)).abs() < 1e-10);
        assert!((k[1] - 1.0 / (PI * PI * 3.25f64.powi(2))).abs() < 1e-10);
    }

    #[test]
    fn constants_agree_in_the_plane() {
        for i in 1..20 {
            let a = i as f64 / 20.0;
            let c1 = riesz_gradient_constant(a, 2);
            let c2 = planar_dissipation_constant(a);
            assert!(((c1 - c2) / c2).abs() < 1e-12);
        }
    }
}
