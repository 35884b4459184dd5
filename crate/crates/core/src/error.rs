use thiserror::Error;

/// Errors raised by the geometry, spectral and flow layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("family is extinct at t = {time} (extinction time {extinction})")]
    Extinction { time: f64, extinction: f64 },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("flow breakdown at t = {time}: metric coefficient {value:e} at node {node}")]
    FlowBreakdown { time: f64, node: usize, value: f64 },

    #[error("stability error at t = {time}: {reason}; shorten the horizon or lower the mode cutoff")]
    Stability { time: f64, reason: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("evaluation past blow-up horizon s = {horizon}")]
    Horizon { horizon: f64 },

    #[error("outside certified regime: {0}")]
    OutOfRegime(String),

    #[error("degenerate input: {0}")]
    Degeneracy(String),

    #[error("oracle error: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, Error>;
