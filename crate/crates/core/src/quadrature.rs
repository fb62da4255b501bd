//! Gauss-Legendre rules and an adaptive integrator built on them.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn rule15() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(15))
}

/// Fixed 15-point Gauss-Legendre on `[a, b]`.
pub fn gl15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = rule15();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

/// Adaptive bisection on `[a, b]` comparing one panel against its two halves.
///
/// `tol` is an absolute tolerance for the whole interval; it is shared between
/// panels in proportion to their length.
pub fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let whole = gl15(f, a, b);
    let mut worst = 0.0f64;
    let v = recurse(f, a, b, whole, tol, b - a, 0, &mut worst);
    if worst > 1e-6 * v.abs().max(tol) {
        return Err(Error::QuadratureNonConvergence(format!(
            "refinements on [{a}, {b}] still differ by {worst:e}"
        )));
    }
    Ok(v)
}

const MAX_DEPTH: usize = 48;

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    total: f64,
    depth: usize,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let l = gl15(f, a, m);
    let r = gl15(f, m, b);
    let diff = (l + r - whole).abs();
    let local = tol * (b - a) / total;
    if diff <= local.max(f64::EPSILON * (l + r).abs()) {
        return l + r;
    }
    if depth >= MAX_DEPTH {
        *worst = worst.max(diff);
        return l + r;
    }
    recurse(f, a, m, l, tol, total, depth + 1, worst) + recurse(f, m, b, r, tol, total, depth + 1, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(15);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for deg in 0..30usize {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "deg {deg}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // \int_0^1 x^{0.3} dx = 1/1.3
        let v = adaptive(&|x: f64| x.powf(0.3), 0.0, 1.0, 1e-13).unwrap();
        assert!((v - 1.0 / 1.3).abs() < 1e-12);
    }
}
