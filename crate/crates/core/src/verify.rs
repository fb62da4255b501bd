//! Verification suites: closed-form and cross-method checks with fixed
//! tolerances, plus the empirical constants they measure.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::Rng;
use statrs::function::gamma::gamma;

use crate::besov::{besov_norm, chi, fd_besov_norm, phi, semigroup_besov_norm, BesovParams, DyadicPartition, Exponent};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::kernel::{kernel_decay_check, kernel_profile, riesz_gradient_constant};
use crate::lagrangian::{norm_identity, pv_fractional_gradient, pv_fractional_laplacian, random_shear_flow, LagrangianState, WINDOW};
use crate::sample;
use crate::scaling::scaling_residual;
use crate::solver::SolverOptions;
use crate::spectral::{cosine_mode, fractional_laplacian, heat_semigroup, partial, FractionalParams, Symbol};

/// One pass/fail line.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `true` when `value <= bound` passes, `false` when `value >= bound` does.
    pub upper: bool,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            upper: true,
            passed: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            upper: false,
            passed: value >= bound,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let op = if self.upper { "<=" } else { ">=" };
        write!(f, "{verdict} {}: {:.3e} (need {op} {:.1e})", self.name, self.value, self.bound)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Besov,
    Lagrangian,
    Scaling,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Kernels, Suite::Besov, Suite::Lagrangian, Suite::Scaling];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernels => "kernels",
            Suite::Besov => "besov",
            Suite::Lagrangian => "lagrangian",
            Suite::Scaling => "scaling",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite `{s}`")))
    }
}

/// Knobs shared by every suite.
#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub n: usize,
    pub seed: u64,
    /// Dissipation symbol handed to the solver-facing checks; `FullLaplacian`
    /// is a negative control that must make the kernels and scaling suites fail.
    pub symbol: Symbol,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n: 64,
            seed: 1,
            symbol: Symbol::Fractional,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    /// Measured constants of the inequalities the suite exercises.
    pub constants: Vec<(String, f64)>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut constants = vec![];
    let checks = match suite {
        Suite::Kernels => {
            let mut v = vec![heat_exactness(opts.n, opts.symbol)?];
            v.extend(kernel_closed_form()?);
            let decay = kernel_decay()?;
            for (alpha, sup, check) in decay {
                constants.push((format!("sup |K|(1+r)^(2+2a), a={alpha}"), sup));
                v.push(check);
            }
            v.push(gamma_constant_identity(20, opts.seed));
            v.extend(pv_vs_spectral(opts.n, 0.75, opts.seed)?);
            v
        }
        Suite::Besov => {
            let (checks, consts) = besov_equivalences(opts.n.min(64), 20, opts.seed)?;
            constants.extend(consts);
            checks
        }
        Suite::Lagrangian => lagrangian_identity(opts.n.min(64), 3, opts.seed)?,
        Suite::Scaling => {
            let (check, control, ratio) = scaling_invariance(64, opts.symbol, opts.seed)?;
            constants.push(("scaling residual / dt-halving error".into(), ratio));
            vec![check, control]
        }
    };
    Ok(SuiteReport {
        suite,
        checks,
        constants,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Relative error of the semigroup on the mode `|k| = 5` at `alpha = 0.75`,
/// `nu = 1`, `t = 0.1` against `exp(-0.1 * 5^{1.5})`.
pub fn heat_exactness(n: usize, symbol: Symbol) -> Result<Check> {
    let g = Grid2D::new(n, 2.0 * PI)?;
    let params = FractionalParams::new(0.75, 1.0)?.with_symbol(symbol);
    let f = cosine_mode(&g, 3, 4);
    let out = heat_semigroup(&f, 0.1, &params)?;
    let factor = (-0.1 * 5f64.powf(1.5)).exp();
    let err = out.sub(&f.scale(factor))?.l2_norm() / (factor * f.l2_norm());
    Ok(Check::at_most("heat semigroup decay of |k| = 5 mode", err, 1e-8))
}

/// The `alpha = 1/2` planar kernel against the Poisson kernel on `[0, 10]`.
pub fn kernel_closed_form() -> Result<Vec<Check>> {
    let radii: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
    let k = kernel_profile(&radii, 0.5, 1.0, 2)?;
    let worst = radii
        .iter()
        .zip(&k)
        .map(|(r, v)| {
            let exact = (1.0 + r * r).powf(-1.5) / (2.0 * PI);
            ((v - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    Ok(vec![Check::at_most("kernel at alpha = 1/2 vs Poisson kernel", worst, 1e-4)])
}

/// `sup |K(r)| (1 + r)^{2 + 2 alpha}` over `r` in `[0, 40]` for `alpha` in
/// `{0.6, 0.75, 0.9}`; the check bounds the tail sup by ten times the sup on `[0, 5]`.
pub fn kernel_decay() -> Result<Vec<(f64, f64, Check)>> {
    let radii: Vec<f64> = (0..=160).map(|i| 0.25 * i as f64).collect();
    let split = radii.iter().position(|&r| r > 5.0).unwrap();
    let mut out = vec![];
    for alpha in [0.6, 0.75, 0.9] {
        let k = kernel_profile(&radii, alpha, 1.0, 2)?;
        let head = kernel_decay_check(&radii[..split], &k[..split], alpha, 2);
        let tail = kernel_decay_check(&radii[split..], &k[split..], alpha, 2);
        let ratio = tail.sup / head.sup;
        out.push((
            alpha,
            head.sup.max(tail.sup),
            Check::at_most(format!("kernel decay product tail/head, alpha = {alpha}"), ratio, 10.0),
        ));
    }
    Ok(out)
}

/// Worst relative gap between the general-dimension constant at `d = 2` and the
/// planar closed form over `count` seeded `alpha` in `(0, 1)`.
pub fn gamma_constant_identity(count: usize, seed: u64) -> Check {
    let mut rng = sample::rng(seed);
    let worst = (0..count)
        .map(|_| {
            let a: f64 = rng.gen_range(0.01..0.99);
            let closed = a * 4f64.powf(a) * gamma(a) / (2.0 * PI * gamma(1.0 - a));
            ((riesz_gradient_constant(a, 2) - closed) / closed).abs()
        })
        .fold(0.0, f64::max);
    Check::at_most(format!("planar constant identity over {count} alphas"), worst, 1e-12)
}

/// Principal-value quadrature of the fractional gradient and of the fractional
/// Laplacian against their Fourier multipliers on a seeded band-limited field.
pub fn pv_vs_spectral(n: usize, alpha: f64, seed: u64) -> Result<Vec<Check>> {
    let g = Grid2D::new(n, 2.0 * PI)?;
    let f = sample::band_limited(&g, 1.0, 4.0, 0.0, &mut sample::rng(seed));
    let rel = |a: &ScalarField, b: &ScalarField| -> Result<f64> { Ok(a.sub(b)?.l2_norm() / b.l2_norm()) };
    let (pv_grad, _) = pv_fractional_gradient(&f, 0, alpha)?;
    let grad_oracle = fractional_laplacian(&partial(&f, 0), 2.0 * alpha - 2.0)?;
    let (pv_lap, _) = pv_fractional_laplacian(&f, alpha)?;
    let lap_oracle = fractional_laplacian(&f, 2.0 * alpha)?;
    Ok(vec![
        Check::at_most(format!("PV fractional gradient vs multiplier, N = {n}"), rel(&pv_grad, &grad_oracle)?, 1e-3),
        Check::at_most(format!("PV fractional Laplacian vs multiplier, N = {n}"), rel(&pv_lap, &lap_oracle)?, 1e-3),
    ])
}

/// Seeded fields with varied spectral bands and slopes.
fn besov_fields(g: &Grid2D, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = sample::rng(seed);
    let top = g.n() as f64 / 3.0;
    (0..count)
        .map(|_| {
            let lo: f64 = rng.gen_range(1.0..4.0);
            let hi: f64 = rng.gen_range(2.0 * lo..top);
            let decay: f64 = rng.gen_range(0.0..2.0);
            sample::band_limited(g, lo, hi, decay, &mut rng)
        })
        .collect()
}

/// Partition of unity on the lattice, and the spread of the finite-difference
/// and semigroup characterizations relative to the dyadic norm over `count`
/// fields. Returns the checks and the measured equivalence constants.
pub fn besov_equivalences(n: usize, count: usize, seed: u64) -> Result<(Vec<Check>, Vec<(String, f64)>)> {
    let g = Grid2D::new(n, 2.0 * PI)?;
    let part = DyadicPartition::covering(&g);
    let mut pou = 0.0f64;
    for idx in 1..g.len() {
        let (k1, k2) = g.wavevector(idx);
        let k = (k1 * k1 + k2 * k2).sqrt();
        let sum: f64 = part.shells().map(|j| part.weight(j, k)).sum();
        pou = pou.max((sum - 1.0).abs());
    }
    // chi + sum_{j >= 0} phi(2^-j .) = 1 on the continuum as well
    for i in 0..2000 {
        let xi = 0.01 * i as f64;
        let sum = chi(xi) + (0..12).map(|j| phi(xi * 2f64.powi(-j))).sum::<f64>();
        pou = pou.max((sum - 1.0).abs());
    }
    let fields = besov_fields(&g, count, seed);
    let params = FractionalParams::new(0.75, 1.0)?;
    let two = Exponent::Finite(2.0);
    let positive = BesovParams::new(0.5, two, two, part);
    let negative = BesovParams::new(-0.5, two, two, part);
    let mut fd = vec![];
    let mut sg = vec![];
    for f in &fields {
        fd.push(fd_besov_norm(f, &positive)? / besov_norm(f, &positive));
        sg.push(semigroup_besov_norm(f, 0.5, two, two, &params)? / besov_norm(f, &negative));
    }
    let spread = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    };
    let (fd_lo, fd_hi) = spread(&fd);
    let (sg_lo, sg_hi) = spread(&sg);
    let checks = vec![
        Check::at_most("partition of unity defect", pou, 1e-10),
        Check::at_most(format!("finite-difference / dyadic ratio cap over {count} fields"), fd_hi / fd_lo, 10.0),
        Check::at_most(format!("semigroup / dyadic ratio cap over {count} fields"), sg_hi / sg_lo, 10.0),
    ];
    let constants = vec![
        ("finite-difference / dyadic, min".into(), fd_lo),
        ("finite-difference / dyadic, max".into(), fd_hi),
        ("semigroup / dyadic, min".into(), sg_lo),
        ("semigroup / dyadic, max".into(), sg_hi),
    ];
    Ok((checks, constants))
}

/// Norm identity between the Lagrangian and Eulerian fractional dissipation on
/// `flows` seeded shear flows, and their bi-Lipschitz window on `10^4` pairs.
pub fn lagrangian_identity(n: usize, flows: usize, seed: u64) -> Result<Vec<Check>> {
    let g = Grid2D::new(n, 2.0 * PI)?;
    let alpha = 0.75;
    let mut worst = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..flows as u64 {
        let fm = random_shear_flow(&g, 3, 0.02, seed.wrapping_add(k))?;
        let (wlo, whi) = crate::flow::bi_lipschitz_ratios(&fm, 10_000, seed.wrapping_add(100 + k));
        lo = lo.min(wlo);
        hi = hi.max(whi);
        let u = sample::divergence_free(&g, 1.0, 3.0, 1.0, &mut sample::rng(seed.wrapping_add(200 + k)));
        let u = crate::spectral::dealias(&u);
        let ls = LagrangianState::from_eulerian(&ScalarField::constant(&g, 1.0), &u, &ScalarField::zeros(&g), fm)?;
        // v o X^{-1} = u on the grid
        let (lag, eul) = norm_identity(&ls, &u, alpha)?;
        worst = worst.max((lag - eul).abs() / eul);
    }
    Ok(vec![
        Check::at_most(format!("Lagrangian vs Eulerian dissipation norm, {flows} flows"), worst, 1e-3),
        Check::at_least("smallest bi-Lipschitz ratio", lo, WINDOW.0),
        Check::at_most("largest bi-Lipschitz ratio", hi, WINDOW.1),
    ])
}

/// `lambda = 2` rescaling of a seeded variable-density run. Returns the
/// residual check, the negative-control check and residual / self-error.
pub fn scaling_invariance(n: usize, symbol: Symbol, seed: u64) -> Result<(Check, Check, f64)> {
    let g = Grid2D::new(n, 2.0 * PI)?;
    let top = n as f64 / 6.0 - 0.5;
    let u = sample::divergence_free(&g, 1.0, top.min(2.5), 0.3, &mut sample::rng(seed));
    let a = sample::band_limited(&g, 1.0, top.min(2.0), 0.0, &mut sample::rng(seed.wrapping_add(1)));
    let rho = a.map(|v| 1.0 + 0.05 * v);
    let params = FractionalParams::for_solver(0.75, 1.0)?.with_symbol(symbol);
    let r = scaling_residual(&rho, &u, params, 2, 0.02, 5, &SolverOptions::default())?;
    let ratio = r.residual / r.self_error;
    Ok((
        Check::at_most("scaling residual / dt-halving error", ratio, 5.0),
        Check::at_least("mis-scaled control / residual", r.negative_control / r.residual, 10.0),
        ratio,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn check_direction() {
        assert!(Check::at_most("x", 1.0, 1.0).passed);
        assert!(!Check::at_most("x", 1.1, 1.0).passed);
        assert!(Check::at_least("x", 10.0, 10.0).passed);
        assert!(!Check::at_least("x", f64::NAN, 1.0).passed);
        assert!(Check::at_most("x", 2e-9, 1e-8).to_string().starts_with("PASS"));
    }

    #[test]
    fn heat_check_detects_the_wrong_symbol() {
        assert!(heat_exactness(16, Symbol::Fractional).unwrap().passed);
        assert!(!heat_exactness(16, Symbol::FullLaplacian).unwrap().passed);
    }

    #[test]
    fn gamma_identity_holds() {
        assert!(gamma_constant_identity(20, 3).passed);
    }
}
