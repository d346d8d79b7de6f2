//! Error type shared across the crate.

/// Crate-wide error enum. Variants map onto the CLI exit-code classes:
/// configuration (2), data (3), numeric (4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Euler-angle extraction requested within the gimbal-lock band.
    #[error("degenerate parametrization: |pitch| = {pitch:.6} rad is within {band:.1e} of pi/2")]
    DegenerateParametrization { pitch: f64, band: f64 },

    #[error("no feasible grasp: {0}")]
    NoFeasibleGrasp(String),

    #[error("empty view: camera sees no part of the object")]
    EmptyView,

    #[error("config error: {0}")]
    Config(String),

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
