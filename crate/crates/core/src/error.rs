use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid grid size {0}: side length must be even and at least 8")]
    InvalidSize(usize),

    #[error("image contains non-finite values")]
    NonFinite,

    #[error("spectrum is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("band ({lo}, {hi}) out of range for n = {n}")]
    BandOutOfRange { lo: f64, hi: f64, n: usize },

    #[error("frequency ({0}, {1}) falls outside the grid")]
    OutOfGrid(i64, i64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("mask is not symmetric under k -> -k (pass symmetrize to repair)")]
    AsymmetricMask,

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("requested {requested} atoms but the mask only has {dof} degrees of freedom")]
    TooManyAtoms { requested: usize, dof: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the failure is numerical (bad data or a solver giving up)
    /// rather than a usage, configuration or I/O problem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite
            | Error::NonHermitian { .. }
            | Error::NoConvergence { .. }
            | Error::DimensionMismatch { .. } => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
