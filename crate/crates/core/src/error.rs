use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("top-degree form")]
    TopDegreeForm,
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("interior product of a 0-form")]
    InteriorOfScalar,
    #[error("degenerate lcs form at point (|det| = {det:.3e})")]
    DegenerateForm { det: f64 },
    #[error("not a Liouville triple (no Liouville form attached)")]
    NotLiouville,
    #[error("outside image (1 - e^(Theta-theta) < 1 required), got fibre coordinate {value}")]
    OutsideTauImage { value: f64 },
    #[error("trajectory exits chart bounds at t = {t}")]
    ChartExit { t: f64 },
    #[error("isotopies live on different model spaces")]
    ModelMismatch,
    #[error("not C1-small at query (base projection Newton failed)")]
    NotC1Small,
    #[error("isotopy too large for C1-small chaining (step cap {cap} exceeded)")]
    ChainCapExceeded { cap: usize },
    #[error("point is not fibre-critical (|dF/dzeta| = {residual:.3e})")]
    NotFibreCritical { residual: f64 },
    #[error("dense engine dimension cap exceeded: total dimension {dim} > cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("persistent class not matched in degree {degree} (resolution too coarse): {found} essential bars")]
    ClassNotMatched { degree: usize, found: usize },
    #[error("separable blocks share variables")]
    BlocksShareVariables,
    #[error("no feasible spectral route: {reasons}")]
    NoFeasibleRoute { reasons: String },
    #[error("metric d is only defined on the S1 x R^2n x S1 model")]
    WrongModel,
    #[error("isotopy not supported in the declared domain (violation at sampled point, margin {margin:.3e})")]
    SupportViolation { margin: f64 },
    #[error("displacement precondition failed: psi does not displace the domain")]
    DoesNotDisplace,
    #[error("newton solver failed to converge (residual {residual:.3e} after {iters} iterations)")]
    NewtonFailed { residual: f64, iters: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
