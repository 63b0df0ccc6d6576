use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite integrand value {value} at node mu = {node}")]
    Evaluation { node: f64, value: f64 },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Missing closure information required by a collision operator.
    #[error("contract error: {0}")]
    Contract(String),

    /// `exp` overflowed even after factoring out the largest exponent.
    #[error("exponential overflow (max exponent {max_exponent:.3e})")]
    Overflow { max_exponent: f64 },

    #[error("closure failed after regularization ladder (last residual {residual:.3e}, r = {regularization:e})")]
    ClosureFailure { residual: f64, regularization: f64 },

    #[error("matrix is numerically singular: {0}")]
    Conditioning(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("step failed in cell {cell} at t = {time}: {source} (moments {moments:?})")]
    StepFailure {
        cell: usize,
        time: f64,
        moments: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (closure, step, eigensolve), as
    /// opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow { .. }
                | Error::ClosureFailure { .. }
                | Error::Conditioning(_)
                | Error::Numeric(_)
                | Error::StepFailure { .. }
        )
    }
}
