use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error(
        "{what} did not converge after {iterations} iterations (last residual {last_residual:.3e})"
    )]
    Convergence {
        what: &'static str,
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("cell (U/J = {u_over_j}, tau*J = {tau_j}): {source}")]
    Cell {
        u_over_j: f64,
        tau_j: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("all {0} sweep cells failed")]
    AllCellsFailed(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// Short machine-readable tag, used in sweep metadata and CLI error summaries.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NumericalConsistency(_) => "numerical_consistency",
            Error::NumericalDomain(_) => "numerical_domain",
            Error::Convergence { .. } => "convergence",
            Error::Propagation(_) => "propagation",
            Error::Cell { source, .. } => source.code(),
            Error::AllCellsFailed(_) => "all_cells_failed",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn at_cell(self, u_over_j: f64, tau_j: f64) -> Error {
        Error::Cell {
            u_over_j,
            tau_j,
            source: Box::new(self),
        }
    }
}
