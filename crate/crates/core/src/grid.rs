use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on the square `[0, L)^2` with `n` points per axis.
///
/// Samples are stored row-major with the first index running along `x1`:
/// the value at `(i1, i2)` lives at `i1 * n + i2`.
#[derive(Clone)]
pub struct Grid2D {
    n: usize,
    box_length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.box_length.to_bits() == other.box_length.to_bits()
    }
}

impl Grid2D {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(n));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidBoxLength(box_length));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            box_length,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Number of samples, `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Base wavenumber `2 pi / L`.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// Signed integer mode for array index `i`, in `[-n/2, n/2)`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Physical wavevector of the flat spectral index.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        let k0 = self.k0();
        (
            k0 * self.mode(idx / self.n) as f64,
            k0 * self.mode(idx % self.n) as f64,
        )
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Physical position of the flat sample index.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.coord(idx / self.n), self.coord(idx % self.n))
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n + i2
    }

    /// Spherical 2/3-rule: keep modes with `|m| < n/3`.
    pub fn keeps_mode(&self, idx: usize) -> bool {
        let m1 = self.mode(idx / self.n) as f64;
        let m2 = self.mode(idx % self.n) as f64;
        let cut = self.n as f64 / 3.0;
        m1 * m1 + m2 * m2 < cut * cut
    }

    /// Largest physical `|k|` on the lattice (the corner mode).
    pub fn max_wavenumber(&self) -> f64 {
        self.k0() * (self.n as f64 / 2.0) * 2f64.sqrt()
    }

    /// Minimal-image difference of two coordinates along one axis.
    pub fn wrap_delta(&self, d: f64) -> f64 {
        let l = self.box_length;
        d - l * (d / l).round()
    }

    /// Reduce a coordinate into `[0, L)`.
    pub fn wrap_coord(&self, x: f64) -> f64 {
        let r = x.rem_euclid(self.box_length);
        if r >= self.box_length {
            0.0
        } else {
            r
        }
    }

    /// Unnormalized forward 2D DFT in place.
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        self.fft2(data, &self.fwd);
    }

    /// Inverse 2D DFT in place, normalized so that it inverts `fft_forward`.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        self.fft2(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    fn fft2(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        plan.process(data);
        transpose_square(data, self.n);
        plan.process(data);
        transpose_square(data, self.n);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    const B: usize = 16;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid2D::new(4, 1.0).is_err());
        assert!(Grid2D::new(12, 1.0).is_err());
        assert!(Grid2D::new(16, 0.0).is_err());
        assert!(Grid2D::new(16, f64::NAN).is_err());
        assert!(Grid2D::new(16, 1.0).is_ok());
    }

    #[test]
    fn modes_span_half_open_range() {
        let g = Grid2D::new(8, 2.0 * PI).unwrap();
        let m: Vec<i64> = (0..8).map(|i| g.mode(i)).collect();
        assert_eq!(m, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_eq!(g.k0(), 1.0);
    }

    #[test]
    fn fft_of_single_mode_is_a_spike() {
        let g = Grid2D::new(16, 2.0 * PI).unwrap();
        let mut d: Vec<Complex64> = (0..g.len())
            .map(|idx| {
                let (x1, x2) = g.point(idx);
                Complex64::from_polar(1.0, 3.0 * x1 - 2.0 * x2)
            })
            .collect();
        g.fft_forward(&mut d);
        for (idx, z) in d.iter().enumerate() {
            let (k1, k2) = g.wavevector(idx);
            let expect = if (k1 - 3.0).abs() < 1e-12 && (k2 + 2.0).abs() < 1e-12 {
                256.0
            } else {
                0.0
            };
            assert!((z.re - expect).abs() < 1e-9 && z.im.abs() < 1e-9, "{idx} {z}");
        }
        g.fft_inverse(&mut d);
        let (x1, x2) = g.point(37);
        let z = Complex64::from_polar(1.0, 3.0 * x1 - 2.0 * x2);
        assert!((d[37] - z).norm() < 1e-13);
    }

    #[test]
    fn wrap_delta_is_minimal_image() {
        let g = Grid2D::new(8, 10.0).unwrap();
        assert!((g.wrap_delta(9.0) + 1.0).abs() < 1e-14);
        assert!((g.wrap_delta(-6.0) - 4.0).abs() < 1e-14);
        assert!((g.wrap_coord(-0.5) - 9.5).abs() < 1e-14);
    }
}
