use thiserror::Error;

/// Errors raised by the plant model, the solvers, the controllers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The constraint set of the plant projection is empty for the given command.
    #[error("structurally infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, objective {objective:.6e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        objective: f64,
    },

    /// A solve ended far from feasibility; the message locates the worst residual.
    #[error("solve failed: {0}")]
    SolveFailed(String),

    /// An internal rule loop ran past its iteration cap. Indicates a bug, not bad input.
    #[error("defect: {0}")]
    Defect(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite")))
    }
}
