use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cost evaluation produced NaN at t={t}, x={x:?}, u={u:?}")]
    EvaluationFault { t: f64, x: Vec<f64>, u: Vec<f64> },

    #[error("arithmetic produced an undefined value: {0}")]
    Undefined(&'static str),

    #[error("empty effective domain: every velocity grid point has infinite cost")]
    EmptyDomain,

    #[error("degenerate window: {0}")]
    DegenerateWindow(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("accumulation factor overflow at node {node}")]
    RateOverflow { node: usize },

    #[error("certificate undefined: the optimum has zero aperture")]
    CertificateUndefined,

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
