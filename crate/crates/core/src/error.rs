use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("closest-point iteration did not converge at ({x}, {y})")]
    NonConvergence { x: f64, y: f64 },

    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("unsupported quadrature order {0}")]
    UnsupportedOrder(usize),

    #[error("linear solve failed: {reason} (relative residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },

    #[error("infeasible bounds: lower {lower} exceeds upper {upper} at ({x}, {y}), t = {t}")]
    InfeasibleBounds {
        lower: f64,
        upper: f64,
        x: f64,
        y: f64,
        t: f64,
    },

    #[error("fixed-point iteration stopped after {iterations} iterations with change {change:e}")]
    NotConverged { iterations: usize, change: f64 },

    #[error("error values must be positive, got {0:e}")]
    NonPositiveError(f64),

    #[error("incompatible meshes: {0}")]
    IncompatibleMeshes(String),

    /// Invalid configuration; `line` is 1-based, or 0 for settings that did
    /// not come from a file.
    #[error("{}", config_message(*line, message))]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_message(line: usize, message: &str) -> String {
    if line == 0 {
        format!("invalid configuration: {message}")
    } else {
        format!("config line {line}: {message}")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
