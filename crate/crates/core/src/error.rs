use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible subproblem: {0}")]
    Infeasible(String),

    #[error("solver failed to converge: {0}")]
    NonConvergence(String),

    #[error(
        "iterate dropped below {needed} non-zero rows+columns ({found} left); \
         the eigen step is no longer well posed"
    )]
    DegenerateIterate { needed: usize, found: usize },

    #[error("target of {target} blocks appears unattainable (alpha exceeded {alpha_cap:e})")]
    BlocksUnattainable { target: usize, alpha_cap: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
