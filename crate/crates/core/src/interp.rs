//! Periodic point interpolation of grid samples.

use crate::field::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolant {
    /// Tensor four-point Lagrange; exact for cubics, used for smooth fields.
    Bicubic,
    /// Bilinear clamped to the four surrounding samples; never leaves their range.
    BilinearClamped,
}

impl std::str::FromStr for Interpolant {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "bicubic" => Ok(Self::Bicubic),
            "bilinear-clamped" | "bilinear" => Ok(Self::BilinearClamped),
            _ => Err(crate::Error::InvalidParameter(format!("unknown interpolant `{s}`"))),
        }
    }
}

#[inline]
fn cell(x: f64, h: f64, n: usize) -> (usize, f64) {
    let s = x / h;
    let f = s.floor();
    let i = (f as i64).rem_euclid(n as i64) as usize;
    (i, s - f)
}

#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Value of the periodic interpolant at the physical point `(x1, x2)`.
#[inline]
pub fn sample(f: &ScalarField, x1: f64, x2: f64, kind: Interpolant) -> f64 {
    match kind {
        Interpolant::Bicubic => bicubic(f, x1, x2),
        Interpolant::BilinearClamped => bilinear_clamped(f, x1, x2),
    }
}

pub fn bicubic(f: &ScalarField, x1: f64, x2: f64) -> f64 {
    let n = f.grid.n();
    let h = f.grid.spacing();
    let (i, t) = cell(x1, h, n);
    let (j, s) = cell(x2, h, n);
    let wi = cubic_weights(t);
    let wj = cubic_weights(s);
    let d = &f.data;
    let mut acc = 0.0;
    for (a, wa) in wi.iter().enumerate() {
        let ii = (i + n + a - 1) % n;
        let row = &d[ii * n..ii * n + n];
        let mut r = 0.0;
        for (b, wb) in wj.iter().enumerate() {
            r += wb * row[(j + n + b - 1) % n];
        }
        acc += wa * r;
    }
    acc
}

pub fn bilinear_clamped(f: &ScalarField, x1: f64, x2: f64) -> f64 {
    let n = f.grid.n();
    let h = f.grid.spacing();
    let (i, t) = cell(x1, h, n);
    let (j, s) = cell(x2, h, n);
    let i1 = (i + 1) % n;
    let j1 = (j + 1) % n;
    let d = &f.data;
    let v00 = d[i * n + j];
    let v01 = d[i * n + j1];
    let v10 = d[i1 * n + j];
    let v11 = d[i1 * n + j1];
    let v = (1.0 - t) * ((1.0 - s) * v00 + s * v01) + t * ((1.0 - s) * v10 + s * v11);
    let lo = v00.min(v01).min(v10).min(v11);
    let hi = v00.max(v01).max(v10).max(v11);
    v.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use proptest::prelude::*;

    #[test]
    fn bicubic_reproduces_cubics_away_from_the_seam() {
        let g = Grid2D::new(32, 8.0).unwrap();
        let poly = |x: f64, y: f64| 0.5 + x - 0.3 * y * y + 0.1 * x * x * y - 0.02 * y * y * y;
        let f = ScalarField::from_fn(&g, poly);
        for &(x, y) in &[(3.1, 4.05), (4.0, 4.0), (2.77, 5.31)] {
            assert!((bicubic(&f, x, y) - poly(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolants_hit_grid_values() {
        let g = Grid2D::new(16, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (6.0 * x).sin() + y);
        let h = g.spacing();
        for &(i, j) in &[(0usize, 0usize), (3, 7), (15, 15)] {
            let x = i as f64 * h;
            let y = j as f64 * h;
            assert!((bicubic(&f, x, y) - f.at(i, j)).abs() < 1e-13);
            assert!((bilinear_clamped(&f, x, y) - f.at(i, j)).abs() < 1e-13);
            // periodic images
            assert!((bicubic(&f, x + 1.0, y - 2.0) - f.at(i, j)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn clamped_bilinear_stays_in_sample_range(x in -3.0f64..3.0, y in -3.0f64..3.0, seed in 0u64..50) {
            let g = Grid2D::new(8, 1.0).unwrap();
            let mut rng = crate::sample::rng(seed);
            let data: Vec<f64> = (0..64).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let f = ScalarField::from_vec(&g, data).unwrap();
            let v = bilinear_clamped(&f, x, y);
            prop_assert!(v >= f.min() && v <= f.max());
        }
    }
}
