use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("a circle field needs at least 8 samples, got {0}")]
    TooFewSamples(usize),
    #[error("n_samples must be even, got {0}")]
    OddSampleCount(usize),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("derivative order must be positive")]
    ZeroOrder,
    #[error("mode {mode} does not fit below the Nyquist limit of an {n}-point grid")]
    Nyquist { mode: usize, n: usize },
    #[error("snapshot declares n = {declared} but holds {actual} samples")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("flow exponent alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("conformal factor not positive: min u = {min:e}, max u = {max:e}")]
    NotPositive { min: f64, max: f64 },
    #[error("grid sizes differ: {0} vs {1}")]
    GridMismatch(usize, usize),
    #[error("operation requires alpha = {expected}, metric has alpha = {actual}")]
    WrongAlpha { expected: f64, actual: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("integration failed at t = {time}: {reason}")]
    Integration {
        time: f64,
        reason: String,
        snapshot: Vec<f64>,
    },
    #[error("orthogonality projection left the convex-curve class (min u^-3 = {min_weight:e})")]
    OrthogonalityLost { min_weight: f64 },
    #[error("initial data violates the orthogonality condition: mode-1 integrals ({cos:e}, {sin:e})")]
    NotOrthogonal { cos: f64, sin: f64 },
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error("normalized time is not monotone near t = {0}")]
    NonMonotoneTime(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("curve does not close: gap {defect:e} against perimeter {perimeter:e}")]
    NotClosed { defect: f64, perimeter: f64 },
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("perimeter minimization did not converge after {iterations} iterations (lambda = {lambda}, angle = {angle})")]
    NoConvergence {
        iterations: usize,
        lambda: f64,
        angle: f64,
    },
    #[error("perimeter minimization escaped to degenerate elongation lambda = {0:e}")]
    Degenerate(f64),
    #[error("polygon needs at least {needed} vertices, got {got}")]
    TooFewVertices { needed: usize, got: usize },
    #[error("polygon is not strictly convex at vertex {0}")]
    NotConvex(usize),
    #[error("polygon is self-intersecting (total turning {turning:.6} rad)")]
    SelfIntersecting { turning: f64 },
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("exponent p = {0} is below 2")]
    ExponentTooSmall(f64),
    #[error("orthogonality precondition violated: mode-1 coefficients of u^-3 are ({a1:e}, {b1:e})")]
    NotOrthogonal { a1: f64, b1: f64 },
    #[error("mode {n_max} is at or beyond the Nyquist limit of an {n}-point grid")]
    ModeBeyondNyquist { n_max: usize, n: usize },
    #[error("decay fit needs at least 10 samples in the window, got {0}")]
    TooFewSamples(usize),
    #[error("decay fit requires positive values; sample at t = {0} is not")]
    NonPositive(f64),
    #[error("empty or inverted window [{0}, {1}]")]
    BadWindow(f64, f64),
}
