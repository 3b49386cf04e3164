//! Crate-wide error type.

use thiserror::Error;

/// Unified error for grid construction, field algebra, propagation, state
/// sampling, configuration parsing and snapshot I/O.
#[derive(Error, Debug)]
pub enum QhdError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown particle index (sort {sort}, particle {index})")]
    UnknownParticle { sort: usize, index: usize },

    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(
        "boundary leak at t = {t}: edge probability {leaked:.3e} exceeds {limit:.1e}; \
         enlarge the box or shorten the run"
    )]
    BoundaryLeak { t: f64, leaked: f64, limit: f64 },

    #[error("no closed form available: {0}")]
    NoClosedForm(String),

    #[error("propagation lost unitarity at t = {t}: grid norm {norm} drifted from 1")]
    NormDrift { t: f64, norm: f64 },

    #[error("snapshot series has non-uniform time stamps")]
    NonUniformTimes,

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QhdError>;
