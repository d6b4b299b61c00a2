use thiserror::Error;

/// Errors raised anywhere in the solve/decompose/verify pipeline.
///
/// Point references are indices into the owning [`MetricMeasureSpace`](crate::mmspace::MetricMeasureSpace).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Shape(String),

    #[error("invalid entry: {0}")]
    InvalidEntry(String),

    #[error("asymmetric distance between points {x} and {y}: {dxy} vs {dyx}")]
    AsymmetricDistance {
        x: usize,
        y: usize,
        dxy: f64,
        dyx: f64,
    },

    #[error(
        "triangle inequality violated: d({x},{y}) exceeds d({x},{z}) + d({z},{y}) by {excess}"
    )]
    TriangleViolation {
        x: usize,
        y: usize,
        z: usize,
        excess: f64,
    },

    #[error("distinct points {x} and {y} are at distance zero")]
    CoincidentPoints { x: usize, y: usize },

    #[error("reference measure has zero total weight")]
    ZeroMeasure,

    #[error("dense matrix input limited to {limit} points, got {n}; use graph mode")]
    DenseTooLarge { n: usize, limit: usize },

    #[error("unknown point id {0:?}")]
    UnknownPoint(String),

    #[error("points {x} and {y} are in different connected components")]
    Disconnected { x: usize, y: usize },

    #[error("resolution {n} too small for model {kind}")]
    BadResolution { kind: String, n: usize },

    #[error("unknown model kind {0:?}")]
    UnknownModel(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("infeasible transport: total masses {mass0} and {mass1} differ")]
    Infeasible { mass0: f64, mass1: f64 },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("closure pair ({x},{y}) violates the potential identity by {defect}")]
    ClosureInflation { x: usize, y: usize, defect: f64 },

    #[error("transport rays not transitive on ({x},{z},{y})")]
    TransitivityFailure { x: usize, z: usize, y: usize },

    #[error("ray {ray} is not a chain at nodes {x},{y}: {reason}")]
    NotAChain {
        ray: usize,
        x: usize,
        y: usize,
        reason: String,
    },

    #[error("plan mass {mass} leaves the rays through branching points (threshold {threshold})")]
    MassOffRays { mass: f64, threshold: f64 },

    #[error("plan moves mass {mass} from {x} to {y} outside the transport set")]
    LeakOutsideTe { x: usize, y: usize, mass: f64 },

    #[error("pushforward mismatch: max marginal deviation {deviation}")]
    PushforwardMismatch { deviation: f64 },

    #[error("duality gap {gap} exceeds the allowed {max_gap}")]
    GapExceeded { gap: f64, max_gap: f64 },

    #[error("invariant check failed: {0}")]
    InvariantFailure(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("level set {{phi = {delta}}} is empty within tolerance {tol}")]
    EmptyLevelSet { delta: f64, tol: f64 },

    #[error("point {x} is not in the transport set")]
    NotInTransportSet { x: usize },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code for the CLI: 2 input, 3 numeric, 4 gap/invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::InvalidEntry(_)
            | Error::AsymmetricDistance { .. }
            | Error::TriangleViolation { .. }
            | Error::CoincidentPoints { .. }
            | Error::ZeroMeasure
            | Error::DenseTooLarge { .. }
            | Error::UnknownPoint(_)
            | Error::Disconnected { .. }
            | Error::BadResolution { .. }
            | Error::UnknownModel(_)
            | Error::InvalidMeasure(_)
            | Error::Infeasible { .. }
            | Error::EmptyLevelSet { .. }
            | Error::NotInTransportSet { .. }
            | Error::Io(_)
            | Error::Parse(_) => 2,
            Error::NumericFailure(_)
            | Error::ClosureInflation { .. }
            | Error::TransitivityFailure { .. }
            | Error::NotAChain { .. }
            | Error::DomainError(_) => 3,
            Error::MassOffRays { .. }
            | Error::LeakOutsideTe { .. }
            | Error::PushforwardMismatch { .. }
            | Error::GapExceeded { .. }
            | Error::InvariantFailure(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
