use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("rank deficient: {0}")]
    Rank(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("view {view}: {source}")]
    View {
        view: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_view(self, view: usize) -> Error {
        Error::View {
            view,
            source: Box::new(self),
        }
    }
}
