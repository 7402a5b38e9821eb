use kbr::KbrError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration file or flag; exit code 2.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(#[from] KbrError),
    #[error("column `{column}`: {reason}")]
    Schema { column: String, reason: String },
    #[error("NaN in column `{0}`")]
    NanValue(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Numerical(KbrError::InvalidConfig(_)) => 2,
            _ => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Numerical(e) => e.name(),
            CliError::Schema { .. } => "SchemaError",
            CliError::NanValue(_) => "NanValue",
            CliError::Io(_) => "IoError",
            CliError::Csv(_) => "CsvError",
            CliError::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
