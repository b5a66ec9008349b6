use std::fmt;

/// A failed run. Configuration problems exit with 2, data problems with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<camcond::Error> for CliError {
    fn from(e: camcond::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub(crate) fn config(msg: impl fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

pub(crate) fn data(msg: impl fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

pub type CliResult<T> = Result<T, CliError>;
