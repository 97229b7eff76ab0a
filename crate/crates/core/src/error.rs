use thiserror::Error;

/// Errors raised by the numerical engine.
///
/// Every variant maps to a stable kebab-case code (see [`Error::code`]) which
/// is what the CLI writes into its structured error records.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is farther than {limit} from the manifold (distance {distance})")]
    FarFromManifold { distance: f64, limit: f64 },
    #[error("tangent vector of length {norm} exceeds the injectivity radius {iota}")]
    BeyondInjectivityRadius { norm: f64, iota: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("frame construction failed: {0}")]
    FrameConstructionFailed(String),
    #[error("newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("newton system is singular (min |eigenvalue| {min_abs_eig:e})")]
    DegenerateHessian { min_abs_eig: f64 },
    #[error("level {level} is within {tol:e} of the critical value {value}")]
    LevelIsCritical { level: f64, value: f64, tol: f64 },
    #[error("projection failed at sample {sample}: step left the tubular neighbourhood")]
    ProjectionFailed { sample: usize },
    #[error("step size {h} exceeds the stability bound {h_max}")]
    StepTooLarge { h: f64, h_max: f64 },
    #[error("capture radius {radius} is not below half the minimal critical-point gap {gap}")]
    AmbiguousCapture { radius: f64, gap: f64 },
    #[error("not enough slices in the asymptotic regime ({found} < {needed})")]
    InsufficientTail { found: usize, needed: usize },
    #[error("endpoint operator is degenerate (min |eigenvalue| {min_abs_eig:e})")]
    EndpointDegenerate { min_abs_eig: f64 },
    #[error("eigenvalue tracking is ambiguous near s = {s}")]
    TrackingAmbiguous { s: f64 },
    #[error("critical point is degenerate (margin {margin:e})")]
    Degenerate { margin: f64 },
    #[error("critical point has Morse index zero; its unstable chart is a point")]
    IndexZero,
    #[error("target-hitting direction interval did not shrink under bisection near angle {angle}")]
    NonTransverseSuspect { angle: f64 },
    #[error("transported frame collapsed (|det| = {det:e})")]
    FrameCollapse { det: f64 },
    #[error("trajectory residual {residual:e} exceeds delta_0 = {delta0:e}")]
    ResidualTooLarge { residual: f64, delta0: f64 },
    #[error("newton correction stalled (contraction factor {factor})")]
    Stalled { factor: f64 },
    #[error("orbit endpoint {0} is not among the generators")]
    DanglingOrbit(String),
    #[error("boundary maps do not square to zero")]
    NotAComplex,
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::FarFromManifold { .. } => "far-from-manifold",
            Error::BeyondInjectivityRadius { .. } => "beyond-injectivity-radius",
            Error::GridMismatch(_) => "grid-mismatch",
            Error::InvalidInput(_) => "invalid-input",
            Error::FrameConstructionFailed(_) => "frame-construction-failed",
            Error::NoConvergence { .. } => "no-convergence",
            Error::DegenerateHessian { .. } => "degenerate-hessian",
            Error::LevelIsCritical { .. } => "a-is-critical",
            Error::ProjectionFailed { .. } => "projection-failed",
            Error::StepTooLarge { .. } => "step-too-large",
            Error::AmbiguousCapture { .. } => "ambiguous-capture",
            Error::InsufficientTail { .. } => "insufficient-tail",
            Error::EndpointDegenerate { .. } => "endpoint-degenerate",
            Error::TrackingAmbiguous { .. } => "tracking-ambiguous",
            Error::Degenerate { .. } => "degenerate",
            Error::IndexZero => "index-zero",
            Error::NonTransverseSuspect { .. } => "non-transverse-suspect",
            Error::FrameCollapse { .. } => "frame-collapse",
            Error::ResidualTooLarge { .. } => "residual-too-large",
            Error::Stalled { .. } => "stalled",
            Error::DanglingOrbit(_) => "dangling-orbit",
            Error::NotAComplex => "not-a-complex",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
