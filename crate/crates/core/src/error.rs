use thiserror::Error;

/// Errors produced by the modeling and planning pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate gripper: distribution matrix has rank {rank} < 6")]
    DegenerateGripper { rank: usize },

    #[error("non-planar gripper: cup {cup} normal deviates {angle_rad:.3e} rad from tool z")]
    NonPlanarGripper { cup: usize, angle_rad: f64 },

    #[error("singular distribution system (condition number {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("linear program infeasible{}", .context.as_ref().map(|c| format!(": {c}")).unwrap_or_default())]
    LpInfeasible { context: Option<String> },

    #[error("linear program unbounded")]
    LpUnbounded,

    #[error("simplex failed: {0}")]
    NumericalFailure(String),

    #[error("object cannot be held at rest: knot {knot}, row {row}")]
    StaticallyInfeasible { knot: usize, row: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
