use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss history has {} entries)", history.len())]
    TrainingDiverged { epoch: usize, history: Vec<f64> },

    #[error("class {0} has no training samples")]
    UnknownClass(usize),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// True for failures caused by the numbers themselves rather than by
    /// configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UndefinedCorrelation(_) | Error::NonFinite(_) | Error::TrainingDiverged { .. }
        )
    }
}
