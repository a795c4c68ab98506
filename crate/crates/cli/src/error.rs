use std::fmt;

use agentclust::embedding_io::IoError;
use agentclust::oracle::OracleError;
use agentclust::traversal::EngineError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Writing an output failed, or the engine hit an internal fault. Exit 1.
    Io(String),
    /// Unreadable, malformed or inconsistent input; bad flag values. Exit 2.
    Input(String),
    /// The remote oracle refused our credentials. Exit 3.
    Auth(String),
    /// A sweep finished but none of its rows produced a run. Exit 4.
    NoRows(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::Auth(_) => 3,
            CliError::NoRows(_) => 4,
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    /// Classify a failure to read an input file. A missing or unreadable
    /// input is the caller's problem, so it maps to exit 2.
    pub fn reading(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn writing(e: IoError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Io(e.to_string())
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Input(m) | CliError::Auth(m) | CliError::NoRows(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Auth { .. } => CliError::Auth(e.to_string()),
            OracleError::Cache(_) => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Oracle { source, .. } => source.into(),
            EngineError::Invariant(_) => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
