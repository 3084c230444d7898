use thiserror::Error;

use crate::exprdsl::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid ambient model: {0}")]
    Ambient(String),
    #[error("metric not positive definite at {0:?}")]
    SingularMetric(Vec<f64>),
    #[error("degenerate immersion point {point:?}: smallest singular value {singular:e}")]
    Degenerate { point: Vec<f64>, singular: f64 },
    #[error("vector is not normal (tangential residual {0:e})")]
    NotNormal(f64),
    #[error("Q eigenvalue {0} outside [-1, 0]")]
    EigenRange(f64),
    #[error("normal bundle does not split: {0}")]
    NormalSplit(String),
    #[error("invalid product declaration: {0}")]
    Declaration(String),
    #[error("warping function not positive ({0})")]
    NonPositiveWarping(f64),
    #[error("{0}")]
    Domain(String),
    #[error("config error at '{path}': {msg}")]
    Config { path: String, msg: String },
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("unknown tolerance key '{0}'")]
    UnknownTolerance(String),
    #[error("too many degenerate samples: {bad} of {total}")]
    TooManyDegenerate { bad: usize, total: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
