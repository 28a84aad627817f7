//! Command-line front end: configuration parsing, experiment dispatch, and
//! machine-readable result emission (CSV + JSON).

pub mod commands;
pub mod config;
pub mod emit;
pub mod presets;

/// Process exit codes: 0 success, 1 property failure, 2 config error,
/// 3 I/O failure.
#[derive(Debug)]
pub enum CliError {
    /// Unparseable or invalid configuration.
    Config(String),
    /// Filesystem failure while emitting results.
    Io(String),
    /// A property check failed.
    CheckFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::CheckFailed => write!(f, "one or more property checks failed"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
