use std::fmt;

use felb_core::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Wraps a solver error, prefixing `context`.
    pub fn from_core(context: impl fmt::Display, e: Error) -> Self {
        let msg = format!("{context}: {e}");
        if e.is_numerical() {
            return CliError::Numerical(msg);
        }
        match root(&e) {
            Error::InvalidArgument(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Client { source, .. } | Error::Round { source, .. } => root(source),
        other => other,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
