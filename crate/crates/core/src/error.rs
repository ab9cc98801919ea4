use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("sample moments are degenerate: {0}")]
    MomentDegenerate(String),
    #[error("series is not equidistant (max relative spacing deviation {0:.3e})")]
    NotEquidistant(f64),
    #[error("ARMA back-transform outside domain: {0}")]
    BackTransformDomain(String),
    #[error("argument {0} outside series domain |z| <= {1}")]
    Domain(f64, f64),
    #[error("numerical inconsistency: {0}")]
    Numerical(String),
    #[error("strategy moments undefined: {0}")]
    UndefinedMoments(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular design matrix: {0}")]
    Collinear(String),
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
