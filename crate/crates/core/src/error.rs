use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("shape mismatch: expected {expected} components, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite component at index {index}")]
    NonFiniteComponent { index: usize },

    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperParam { name: &'static str, reason: String },

    #[error("grid index {index} exceeds max_grid_depth {max}")]
    GridIndexOutOfRange { index: usize, max: usize },

    #[error("gradient is zero but an exclusion cap was requested")]
    ZeroGradientWithCap,

    #[error("point lies on the exclusion set")]
    OnExclusionSet,

    #[error("gradient is zero; the point is already critical")]
    ZeroGradient,

    #[error("no grid candidate satisfied the acceptance condition within {depth} halvings")]
    ExhaustedGrid { depth: usize },

    #[error("objective produced a non-finite value")]
    NonFiniteValue,

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("finite-difference probe touched the exclusion set at coordinate {coordinate}")]
    RegionViolation { coordinate: usize },

    #[error("order is not a permutation of the {blocks} blocks")]
    InvalidOrder { blocks: usize },

    #[error("trajectory carries no step sizes")]
    MissingRates,

    #[error("trajectory too short: need at least {needed} iterations, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}
