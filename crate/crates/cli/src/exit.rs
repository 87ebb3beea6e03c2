use std::path::PathBuf;

/// Process exit codes. Usage errors use clap's code 2.
pub mod code {
    pub const FAILURE: i32 = 1;
    pub const UNREADABLE_INPUT: i32 = 3;
    pub const MALFORMED_INPUT: i32 = 4;
    pub const INVALID_CONFIG: i32 = 5;
    pub const CONSTRAINT_INFEASIBLE: i32 = 6;
    pub const OUTPUT: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] bqrspline::Error),
}

impl CliError {
    /// Prefixes the message of a configuration error; other errors pass through.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreadable { .. } => code::UNREADABLE_INPUT,
            CliError::Malformed { .. } => code::MALFORMED_INPUT,
            CliError::Config(_) => code::INVALID_CONFIG,
            CliError::Output { .. } => code::OUTPUT,
            CliError::Model(bqrspline::Error::InvalidInput(_)) => code::INVALID_CONFIG,
            CliError::Model(bqrspline::Error::ConstraintInfeasible { .. }) => code::CONSTRAINT_INFEASIBLE,
            CliError::Model(_) => code::FAILURE,
        }
    }
}
