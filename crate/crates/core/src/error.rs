use std::path::PathBuf;

/// Errors raised by the embedding library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is rank deficient (pivot {pivot} with magnitude {magnitude:e})")]
    RankDeficient { pivot: usize, magnitude: f64 },

    #[error("linear system is singular or not positive definite (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("requested dimension {requested} but only {usable} usable spectral components")]
    Dimension { requested: usize, usable: usize },

    #[error("gradient descent diverged (cost {cost:e} vs initial {initial:e}); use a smaller step size")]
    Divergence { cost: f64, initial: f64 },

    #[error("point is not on the orthogonal-column manifold: {0}")]
    NotOnManifold(String),

    #[error("retraction failed: {0}")]
    Retraction(String),

    #[error("degenerate column {0}")]
    DegenerateColumn(usize),

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
