use thiserror::Error;

/// Errors raised by the solver, the analysis toolkit and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 8")]
    InvalidGrid(usize),
    #[error("box length must be positive and finite, got {0}")]
    InvalidBoxLength(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("exponent {0} outside (-2, 2]")]
    InvalidExponent(f64),
    #[error("negative exponent needs a mean-free field (mean = {0:e})")]
    NonMeanFreeInput(f64),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time series is empty")]
    EmptySeries,
    #[error("time samples are not uniformly spaced")]
    NonuniformSpacing,
    #[error("need at least {needed} time samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("shell index {j} outside [{min}, {max}]")]
    ShellOutOfRange { j: i32, min: i32, max: i32 },
    #[error("regularity index {0} outside the admissible range")]
    SOutOfRange(f64),
    #[error("probe dictionary is empty")]
    EmptyDictionary,
    #[error("integral of |grad u| is {0}, outside the Neumann-series regime (must be <= 1/2)")]
    OutsideNeumannRegime(f64),
    #[error("flow leaves the bi-Lipschitz window (integral of |grad u| = {0})")]
    OutsideBiLipschitzWindow(f64),
    #[error("blow-up detected at t = {t}: |u|_inf = {norm:e} exceeds cap {cap:e}")]
    BlowupDetected { t: f64, norm: f64, cap: f64 },
    #[error("non-positive density {min:e} at t = {t}")]
    NonPositiveDensity { t: f64, min: f64 },
    #[error("pressure iteration diverged after {iterations} sweeps (contraction factor {factor:.3})")]
    PressureIterationDiverged { iterations: usize, factor: f64 },
    #[error("Picard iteration not contracting after {iterations} sweeps (last increment {increment:e})")]
    PicardNotContracting { iterations: usize, increment: f64 },
    #[error("contour needs at least 64 markers, got {0}")]
    TooFewMarkers(usize),
    #[error("contour self-intersects between segments {0} and {1}")]
    SelfIntersection(usize, usize),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
