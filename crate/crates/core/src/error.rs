use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    Domain { what: &'static str },

    #[error("derivative chain meets the non-smooth point of w|w| (w = {w})")]
    Smoothness { w: f64 },

    #[error("requested order {order} exceeds the supported maximum {max}")]
    Order { order: usize, max: usize },

    #[error("{what} is singular (det = {det:e})")]
    Singular { what: &'static str, det: f64 },

    #[error("Newton iteration for {what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid parameter `{key}`: {msg}")]
    Param { key: String, msg: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point (x_e1, x_e3) = ({delta1}, {delta2}) lies outside the nonsingular region")]
    OutsideRegion { delta1: f64, delta2: f64 },

    #[error("no feasible solution: {0}")]
    Infeasible(String),

    #[error("integration failed at t = {t}: {msg}")]
    Integration { t: f64, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
