use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("unknown level `{level}`")]
    UnknownLevel { level: String },

    #[error("value {value} lies outside the basis support [{lower}, {upper}]")]
    OutsideSupport { value: f64, lower: f64, upper: f64 },

    #[error("discrete basis has no derivative")]
    DiscreteDerivative,

    #[error("transformation function is not increasing at row {row}")]
    ConstraintViolation { row: usize },

    #[error("probability mass underflow at row {row}")]
    Underflow { row: usize },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("data error{}: {message}", location(.row, .column))]
    Data {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model is not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("optimizer failed: {0}")]
    Convergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" (row {r}, column `{c}`)"),
        (Some(r), None) => format!(" (row {r})"),
        (None, Some(c)) => format!(" (column `{c}`)"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn data(message: impl Into<String>) -> Self {
        Error::Data {
            row: None,
            column: None,
            message: message.into(),
        }
    }
}
