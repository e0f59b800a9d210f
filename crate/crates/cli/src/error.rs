use fairaudit::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }

    /// Classify a library error, prefixing `context`.
    pub fn from_core(context: &str, e: fairaudit::Error) -> Self {
        let msg = format!("{context}: {e}");
        match e.class() {
            ErrorClass::Config => CliError::Config(msg),
            ErrorClass::Data => CliError::Data(msg),
            ErrorClass::Analysis => CliError::Analysis(msg),
        }
    }
}
