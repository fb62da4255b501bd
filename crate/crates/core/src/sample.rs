//! Seeded random and analytic test fields.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{ScalarField, Spectrum, VectorField2};
use crate::grid::Grid2D;
use crate::spectral::biot_savart;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Real mean-free field with random coefficients on the modes
/// `m_lo <= |m| <= m_hi` (integer lattice radius), amplitude `|m|^{-decay}`.
pub fn band_limited(grid: &Grid2D, m_lo: f64, m_hi: f64, decay: f64, rng: &mut impl Rng) -> ScalarField {
    let n = grid.n();
    let mut s = Spectrum::zeros(grid);
    for idx in 0..grid.len() {
        let m1 = grid.mode(idx / n);
        let m2 = grid.mode(idx % n);
        let r = ((m1 * m1 + m2 * m2) as f64).sqrt();
        if r == 0.0 || r < m_lo || r > m_hi {
            continue;
        }
        // Fill one half-plane and mirror, so the field is real.
        if m1 < 0 || (m1 == 0 && m2 < 0) {
            continue;
        }
        if m1 == -(n as i64) / 2 || m2 == -(n as i64) / 2 {
            continue;
        }
        let amp = r.powf(-decay);
        let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp;
        s.data[idx] = z;
        let j1 = ((-m1).rem_euclid(n as i64)) as usize;
        let j2 = ((-m2).rem_euclid(n as i64)) as usize;
        s.data[j1 * n + j2] = z.conj();
    }
    let mut f = s.to_field();
    let norm = f.max_abs();
    if norm > 0.0 {
        f = f.scale(1.0 / norm);
    }
    f
}

/// Divergence-free velocity from a random band-limited stream function,
/// scaled to `max |u| = amplitude`.
pub fn divergence_free(grid: &Grid2D, m_lo: f64, m_hi: f64, amplitude: f64, rng: &mut impl Rng) -> VectorField2 {
    let omega = band_limited(grid, m_lo, m_hi, 0.0, rng);
    let u = biot_savart(&omega);
    let m = u.max_abs();
    if m == 0.0 {
        u
    } else {
        u.scale(amplitude / m)
    }
}

/// Periodized Gaussian bump `exp(-|x - c|^2 / (2 sigma^2))` using minimal-image distance.
pub fn gaussian_bump(grid: &Grid2D, center: (f64, f64), sigma: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x1, x2| {
        let d1 = grid.wrap_delta(x1 - center.0);
        let d2 = grid.wrap_delta(x2 - center.1);
        (-(d1 * d1 + d2 * d2) / (2.0 * sigma * sigma)).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::divergence_norm;

    #[test]
    fn band_limited_is_real_mean_free_and_deterministic() {
        let g = Grid2D::new(32, 10.0).unwrap();
        let a = band_limited(&g, 2.0, 6.0, 1.0, &mut rng(7));
        let b = band_limited(&g, 2.0, 6.0, 1.0, &mut rng(7));
        assert_eq!(a, b);
        assert!(a.mean().abs() < 1e-14);
        // the imaginary part discarded by the inverse transform must be negligible
        let s = a.to_spectrum();
        let back = s.to_field();
        assert!(back.sub(&a).unwrap().max_abs() < 1e-14);
        for idx in 0..g.len() {
            let (k1, k2) = g.wavevector(idx);
            let r = (k1 * k1 + k2 * k2).sqrt() / g.k0();
            if s.data[idx].norm() > 1e-9 {
                assert!((2.0 - 1e-9..=6.0 + 1e-9).contains(&r));
            }
        }
    }

    #[test]
    fn divergence_free_sample() {
        let g = Grid2D::new(32, 10.0).unwrap();
        let u = divergence_free(&g, 1.0, 4.0, 0.3, &mut rng(1));
        assert!((u.max_abs() - 0.3).abs() < 1e-12);
        assert!(divergence_norm(&u) < 1e-12);
    }
}
