use thiserror::Error;

/// Failure categories, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 2 config, 3 i/o, 4 data integrity, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<nested_conformal::Error> for CliError {
    fn from(e: nested_conformal::Error) -> Self {
        use nested_conformal::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::DataIntegrity(m) => CliError::Data(m),
            E::Io(m) => CliError::Io(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
