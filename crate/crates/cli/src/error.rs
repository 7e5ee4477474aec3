use std::fmt;

use twosite::Error;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: configuration, parameters, infeasible references. Exit 1.
    Validation(String),
    /// Solver, integrator or controller failure. Exit 2.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Param { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::OutsideRegion { .. }
            | Error::Infeasible(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o: {e}"))
    }
}
