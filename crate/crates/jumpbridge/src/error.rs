use thiserror::Error;

/// Library-wide error type. The CLI maps these onto exit codes: data problems
/// (parsing, shapes, normalization bookkeeping) are exit 2, numerical failures
/// (domain violations, degenerate estimators, non-finite values) are exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}, column {col}: {msg}")]
    CsvParse { row: usize, col: usize, msg: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("estimator degenerate at interval {interval}, t = {t}: denominator vanished even after dropping kernel weights (state {state:?})")]
    Estimation {
        interval: usize,
        t: f64,
        state: Vec<f64>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code class for CLI reporting: 2 = data, 3 = numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CsvParse { .. }
            | Error::Shape(_)
            | Error::Config(_)
            | Error::Normalization(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Domain(_) | Error::Unsupported(_) | Error::Estimation { .. } => 3,
        }
    }
}
