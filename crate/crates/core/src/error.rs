use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate loop: amplitude {amplitude:.3e} on the winding loop is below {threshold:.3e}")]
    DegenerateLoop { amplitude: f64, threshold: f64 },

    #[error("degenerate background: background region has zero variance or fewer than 2 samples")]
    DegenerateBackground,

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("degenerate site at ({x:.4e}, {y:.4e}): ring carries no intensity")]
    DegenerateSite { x: f64, y: f64 },

    #[error("no lattice found: {0}")]
    NoLatticeFound(String),

    #[error("no registration: correlation peak {peak:.3} is below {threshold}")]
    NoRegistration { peak: f64, threshold: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
