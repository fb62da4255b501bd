use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Real samples of a scalar on the periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

/// Fourier coefficients of a real field (unnormalized DFT).
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub grid: Grid2D,
    pub data: Vec<Complex64>,
}

/// Two-component vector field; `comp[0]` is along `x1`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    pub comp: [ScalarField; 2],
}

impl ScalarField {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid2D, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|idx| {
                let (x1, x2) = grid.point(idx);
                f(x1, x2)
            })
            .collect();
        Self {
            grid: grid.clone(),
            data,
        }
    }

    pub fn from_vec(grid: &Grid2D, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: grid.clone(),
            data,
        })
    }

    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.data[self.grid.index(i1, i2)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `\int f dx` by the rectangle rule.
    pub fn integral(&self) -> f64 {
        let h = self.grid.spacing();
        self.data.iter().sum::<f64>() * h * h
    }

    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        (self.data.iter().map(|v| v * v).sum::<f64>() * h * h).sqrt()
    }

    /// `L^p` norm by grid quadrature; `p = inf` gives the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let h = self.grid.spacing();
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        // Rescale before raising to p to keep large p from overflowing.
        let s: f64 = self.data.iter().map(|v| (v.abs() / m).powf(p)).sum();
        m * (s * h * h).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_grid(other)?;
        let h = self.grid.spacing();
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum::<f64>() * h * h)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let mut data: Vec<Complex64> = self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.grid.fft_forward(&mut data);
        Spectrum {
            grid: self.grid.clone(),
            data,
        }
    }

    /// Translate by a physical offset using a spectral phase shift: returns `f(x - a)`.
    pub fn translate(&self, a: (f64, f64)) -> Self {
        let mut s = self.to_spectrum();
        for (idx, z) in s.data.iter_mut().enumerate() {
            let (k1, k2) = s.grid.wavevector(idx);
            *z *= Complex64::from_polar(1.0, -(k1 * a.0 + k2 * a.1));
        }
        s.to_field()
    }
}

impl Spectrum {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Inverse transform, keeping the real part.
    pub fn to_field(&self) -> ScalarField {
        let mut d = self.data.clone();
        self.grid.fft_inverse(&mut d);
        ScalarField {
            grid: self.grid.clone(),
            data: d.into_iter().map(|z| z.re).collect(),
        }
    }

    /// Multiply mode by mode by `m(k1, k2)`.
    pub fn apply(&mut self, m: impl Fn(f64, f64) -> Complex64) {
        for (idx, z) in self.data.iter_mut().enumerate() {
            let (k1, k2) = self.grid.wavevector(idx);
            *z *= m(k1, k2);
        }
    }

    pub fn apply_real(&mut self, m: impl Fn(f64, f64) -> f64) {
        for (idx, z) in self.data.iter_mut().enumerate() {
            let (k1, k2) = self.grid.wavevector(idx);
            *z *= m(k1, k2);
        }
    }

    /// Zero-mode coefficient divided by `n^2`, i.e. the field mean.
    pub fn mean(&self) -> f64 {
        self.data[0].re / self.grid.len() as f64
    }

    /// `L^2` norm via Plancherel.
    pub fn l2_norm(&self) -> f64 {
        let n2 = self.grid.len() as f64;
        let l = self.grid.box_length();
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / n2 * l * l / n2).sqrt()
    }
}

impl VectorField2 {
    pub fn new(c1: ScalarField, c2: ScalarField) -> Result<Self> {
        c1.check_grid(&c2)?;
        Ok(Self { comp: [c1, c2] })
    }

    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            comp: [ScalarField::zeros(grid), ScalarField::zeros(grid)],
        }
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self {
            comp: [
                ScalarField::from_fn(grid, |x1, x2| f(x1, x2).0),
                ScalarField::from_fn(grid, |x1, x2| f(x1, x2).1),
            ],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.comp[0].grid
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        self.comp[0].check_grid(&other.comp[0])
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            comp: [self.comp[0].add(&other.comp[0])?, self.comp[1].add(&other.comp[1])?],
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            comp: [self.comp[0].sub(&other.comp[0])?, self.comp[1].sub(&other.comp[1])?],
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            comp: [self.comp[0].scale(c), self.comp[1].scale(c)],
        }
    }

    /// Multiply both components by a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> Result<Self> {
        Ok(Self {
            comp: [self.comp[0].mul(s)?, self.comp[1].mul(s)?],
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.comp[0].l2_norm().hypot(self.comp[1].l2_norm())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        Ok(self.comp[0].dot(&other.comp[0])? + self.comp[1].dot(&other.comp[1])?)
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        self.comp[0]
            .zip_map(&self.comp[1], |a, b| a.hypot(b))
            .expect("components share a grid")
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().max_abs()
    }

    pub fn mean(&self) -> (f64, f64) {
        (self.comp[0].mean(), self.comp[1].mean())
    }

    pub fn is_finite(&self) -> bool {
        self.comp[0].is_finite() && self.comp[1].is_finite()
    }

    pub fn translate(&self, a: (f64, f64)) -> Self {
        Self {
            comp: [self.comp[0].translate(a), self.comp[1].translate(a)],
        }
    }
}

/// Fields whose operators act componentwise.
pub trait Componentwise: Sized + Clone {
    fn try_map(&self, f: impl Fn(&ScalarField) -> Result<ScalarField>) -> Result<Self>;
    fn components(&self) -> Vec<&ScalarField>;
    fn grid_of(&self) -> &Grid2D {
        &self.components()[0].grid
    }
}

impl Componentwise for ScalarField {
    fn try_map(&self, f: impl Fn(&ScalarField) -> Result<ScalarField>) -> Result<Self> {
        f(self)
    }
    fn components(&self) -> Vec<&ScalarField> {
        vec![self]
    }
}

impl Componentwise for VectorField2 {
    fn try_map(&self, f: impl Fn(&ScalarField) -> Result<ScalarField>) -> Result<Self> {
        Ok(Self {
            comp: [f(&self.comp[0])?, f(&self.comp[1])?],
        })
    }
    fn components(&self) -> Vec<&ScalarField> {
        vec![&self.comp[0], &self.comp[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid2D {
        Grid2D::new(32, 2.0 * PI).unwrap()
    }

    #[test]
    fn round_trip_is_exact_to_rounding() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x, y| (x + 0.3).sin() * (2.0 * y).cos() + 0.1 * x);
        let back = f.to_spectrum().to_field();
        let err = back.sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn norms_of_cosine() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x, _| x.cos());
        // \int cos^2 over the square = 2 pi^2
        assert!((f.l2_norm() - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!((f.to_spectrum().l2_norm() - f.l2_norm()).abs() < 1e-12);
        assert!((f.lp_norm(f64::INFINITY) - 1.0).abs() < 1e-14);
        assert!((f.lp_norm(2.0) - f.l2_norm()).abs() < 1e-12);
        assert!(f.mean().abs() < 1e-15);
    }

    #[test]
    fn translate_shifts_by_whole_cells_exactly() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x, y| (x - 1.0).sin() + (y * 3.0).cos());
        let h = g.spacing();
        let t = f.translate((2.0 * h, 0.0));
        for i1 in 0..32 {
            for i2 in 0..32 {
                let expect = f.at((i1 + 30) % 32, i2);
                assert!((t.at(i1, i2) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = ScalarField::zeros(&grid());
        let b = ScalarField::zeros(&Grid2D::new(16, 2.0 * PI).unwrap());
        assert!(matches!(a.add(&b), Err(Error::GridMismatch)));
    }
}
