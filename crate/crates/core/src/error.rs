use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported dimension {0}: MUB generation needs d = 2 or an odd prime d <= 7")]
    UnsupportedDimension(usize),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no safe vector for guessing function {x}: residual {residual:.3e}")]
    ResidualTooLarge { x: String, residual: f64 },

    #[error("strategy is not maximal: best attainable min weight is {min_weight:.3e}")]
    NotMaximal { min_weight: f64 },

    #[error("no nonnegative POVM weights reproduce the identity")]
    Infeasible,

    #[error("resource guard exceeded: {0}")]
    ResourceGuard(String),

    #[error("outcome has zero probability")]
    ZeroProbability,

    #[error("sampled distribution sums to {0}, not 1")]
    NotNormalized(f64),

    #[error("invalid attack model: {0}")]
    InvalidAttack(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
