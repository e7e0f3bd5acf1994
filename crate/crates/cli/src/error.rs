use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A bad flag or input file; `field` names the offending setting.
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), message: message.into() }
    }

    pub fn compute(e: impl std::fmt::Display) -> Self {
        CliError::Compute(e.to_string())
    }
}

/// Process exit status: clean verdicts, failed math verdicts, operational errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Fail = 1,
    Error = 2,
}

impl Status {
    pub fn worst(self, other: Status) -> Status {
        if other as u8 > self as u8 { other } else { self }
    }
}
