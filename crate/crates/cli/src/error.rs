//! CLI error classification and exit codes: 0 success, 1 solver failure,
//! 2 input error, 3 acceptance-check failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad config, paths, flags, dimensions: exit 2.
    Input(String),
    /// A solve did not reach optimality or an oracle broke down: exit 1.
    Solver(String),
    /// A reproduction check failed: exit 3.
    Check(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Input(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<lqgsdp::Error> for CliError {
    fn from(e: lqgsdp::Error) -> Self {
        use lqgsdp::Error::*;
        match e {
            DimensionMismatch(_) | InvalidArgument(_) | NotTriangular { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io: {e}"))
    }
}
