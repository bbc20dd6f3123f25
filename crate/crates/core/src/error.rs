use thiserror::Error;

use crate::web::Strip;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A lattice point off the bipartite sublattice `t + x` even.
    #[error("lattice point (t={t}, x={x}) violates the parity constraint t + x even")]
    Parity { t: i64, x: i64 },

    /// A strip-limited view was asked for a cell it does not cover.
    #[error("arrow query at (t={t}, x={x}) is outside strip {strip}")]
    AccessDenied { t: i64, x: i64, strip: Strip },

    /// A replayed view was asked for a cell that was never recorded.
    #[error("arrow at (t={t}, x={x}) is not present in the recorded strip data")]
    NotRecorded { t: i64, x: i64 },

    #[error("override regions overlap: {0}")]
    OverlappingRegions(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Geometry guards for experiment configurations (ε < δ < P and friends).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    /// A structural invariant of the simulation failed. Always a bug.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
