//! Crate-wide error type.

use std::fmt;

/// Errors produced by the signal operators, forward model and solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two vectors that must have equal length do not.
    LengthMismatch { left: usize, right: usize },
    /// Matrix dimensions incompatible with the requested operation.
    DimensionMismatch(String),
    /// A sub-sampling factor does not divide the ambient dimension.
    NonDivisor { factor: usize, dim: usize },
    /// Input vector or matrix contains NaN or infinite entries.
    NonFinite,
    /// Empty or zero input where a nonzero quantity is required.
    ZeroInput(String),
    /// The mask constant mu is too small for stable pointwise division.
    IllConditionedMask { mu: f64, threshold: f64 },
    /// A pointwise division hit a denominator entry below the guard threshold.
    DivisionBlowup { offset: i64, min_abs: f64, threshold: f64 },
    /// Aliased autocorrelation bands overlap; sub-sampled recovery is not possible.
    AliasOverlap(String),
    /// Angular synchronization needs at least two diagonal offsets to propagate phases.
    BandTooNarrow { kappa: usize },
    /// Wirtinger descent diverged (objective blew up past the guard).
    Divergence { iter: usize, objective: f64 },
    /// A rank-1 reshape/synchronization step found no dominant component.
    DegenerateEstimate { fraction: f64 },
    /// Every per-shift deconvolution failed; no estimate pair survives.
    AllShiftsFailed,
    /// Invalid experiment configuration; one message per violated invariant.
    InvalidConfig(Vec<String>),
    /// Filesystem error while writing experiment output.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::NonDivisor { factor, dim } => {
                write!(f, "{factor} does not divide dimension {dim}")
            }
            Error::NonFinite => write!(f, "input contains NaN or infinite entries"),
            Error::ZeroInput(what) => write!(f, "zero input: {what}"),
            Error::IllConditionedMask { mu, threshold } => {
                write!(f, "mask constant mu = {mu:.3e} below threshold {threshold:.3e}")
            }
            Error::DivisionBlowup { offset, min_abs, threshold } => write!(
                f,
                "division guard at offset {offset}: min |denominator| = {min_abs:.3e} < {threshold:.3e}"
            ),
            Error::AliasOverlap(msg) => write!(f, "aliasing overlap: {msg}"),
            Error::BandTooNarrow { kappa } => {
                write!(f, "band half-width kappa = {kappa} too narrow for phase propagation")
            }
            Error::Divergence { iter, objective } => {
                write!(f, "solver diverged at iteration {iter} (objective {objective:.3e})")
            }
            Error::DegenerateEstimate { fraction } => {
                write!(f, "degenerate rank-1 estimate (leading fraction {fraction:.3})")
            }
            Error::AllShiftsFailed => write!(f, "all per-shift deconvolutions failed"),
            Error::InvalidConfig(msgs) => write!(f, "invalid config: {}", msgs.join("; ")),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
