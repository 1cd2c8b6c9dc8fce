use alloc::string::String;
use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("singular detuning: {0}")]
    SingularDetuning(&'static str),

    #[error("dressed-state label tracking failed at amplitude {amplitude} GHz (overlap {overlap:.3})")]
    LabelTracking { amplitude: f64, overlap: f64 },

    #[error("charge basis truncation insufficient: energy change {change:e} GHz at cutoff {cutoff}")]
    ChargeTruncation { change: f64, cutoff: usize },

    #[error("amplitude {amplitude} GHz outside Stark map range [0, {max}] GHz")]
    OutsideStarkMap { amplitude: f64, max: f64 },

    #[error("integration step failure at t = {time} ns: {reason}")]
    StepFailure { time: f64, reason: &'static str },

    #[error("empty or trivial record: {0}")]
    EmptyRecord(&'static str),

    #[error("time grids misaligned beyond resampling tolerance")]
    GridMisaligned,

    #[error("g2 undefined: <A^dag A> = {population:.4} below threshold {threshold}")]
    UndefinedG2 { population: f64, threshold: f64 },

    #[error("optimizer did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("no interior minimum in Stark scan at amplitude {amplitude} GHz")]
    NoStarkMinimum { amplitude: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
