use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vertex {exclusion} is not a neighbor of {vertex}")]
    ExclusionNotNeighbor { vertex: usize, exclusion: usize },

    #[error("self-avoiding path length {requested} exceeds the enumeration guard {limit}")]
    DepthGuardExceeded { requested: usize, limit: usize },

    #[error("color weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("invalid update rule: {0}")]
    InvalidRule(String),

    #[error("flip cap of {cap} exceeded at t = {time}")]
    FlipCapExceeded { cap: usize, time: f64 },

    #[error("core variant {variant} does not fit this topology: {reason}")]
    VariantMismatch { variant: String, reason: String },

    #[error("layer {0} cannot be paired")]
    UnpairedLayer(usize),

    #[error("special vertex set is empty")]
    EmptySpecialSet,

    #[error("at least two special vertices are required, got {0}")]
    TooFewSpecial(usize),

    #[error("no threshold below 1 found; lambda* at 1 - 1e-9 is {0}")]
    ThresholdNotFound(f64),

    #[error("experiment spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
