use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate relative velocity")]
    DegenerateRelativeVelocity,
    #[error("collision angle undefined for a degenerate pair with gamma = 0")]
    UndefinedAngle,
    #[error("point is not on the boundary (|xi| = {0:e})")]
    NotOnBoundary(f64),
    #[error("level-set gradient vanishes at the boundary point")]
    VanishingGradient,
    #[error("zero velocity has no exit time")]
    ZeroVelocity,
    #[error("ray never left the domain inside the bounding box")]
    NoExit,
    #[error("start point is not inside the domain (xi = {0:e})")]
    NotInterior(f64),
    #[error("grazing resample failed {0} times")]
    DegenerateCycle(usize),
    #[error("grid too large: {0}")]
    GridTooLarge(String),
    #[error("negative distribution value {value:e} at cell {cell}, node {node}")]
    NegativeF { value: f64, cell: usize, node: usize },
    #[error("representation mismatch: expected {expected}, found {found}")]
    Representation { expected: &'static str, found: &'static str },
    #[error("more than {0} wall hits inside one step")]
    TooManyWallHits(usize),
    #[error("truncated cycle tail {tail:e} exceeds 10% of value {value:e}")]
    TruncationResidual { tail: f64, value: f64 },
    #[error("fixed-point iteration diverged at m = {0}")]
    Divergence(usize),
    #[error("need at least {need} positive samples for a fit, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("nonpositive value {0:e} in a log-linear fit")]
    NonpositiveValue(f64),
    #[error("step {step}: {message}")]
    Step { step: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}
