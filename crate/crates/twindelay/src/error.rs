use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// The kernel carries an atom at zero whose `I - A` is singular, so no
    /// resolvent exists.
    #[error("kernel atom at zero makes I - A singular; no resolvent exists")]
    SingularAtZero,
    /// The boundary scan found a near-zero of the characteristic function but
    /// the winding number claims no roots; refusing to issue a verdict.
    #[error("half-plane scan inconclusive: boundary minimum {min_modulus:.3e} is below the decision threshold while the winding number is zero")]
    InconclusiveScan { min_modulus: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
