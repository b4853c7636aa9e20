use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix dimension {0} is not a positive even number")]
    OddDimension(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: entry ({row},{col}) differs from its transpose by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e}")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("state is unphysical: minimum symplectic eigenvalue {min_symplectic_eigenvalue}")]
    Unphysical { min_symplectic_eigenvalue: f64 },

    #[error("state is unphysical: det = {det} below 1")]
    DeterminantBelowVacuum { det: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("mean vector length {mean} does not match covariance dimension {dim}")]
    MeanLength { mean: usize, dim: usize },

    #[error("nonzero mean is not supported (|d|max = {0:e})")]
    NonzeroMean(f64),

    #[error("expected a {expected} state, got {got} modes")]
    ModeCount { expected: &'static str, got: usize },

    #[error("parameter {name} = {value} is out of range: {reason}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("unknown noise model {0:?} (expected \"fixed\" or \"loss_scaled\")")]
    UnknownNoiseModel(String),

    #[error("gain too large for this state: 2G1 - sigma has eigenvalue {eigenvalue:e}")]
    GainTooLarge { eigenvalue: f64 },

    #[error("single-mode limit did not converge (successive differences {first:e} -> {second:e})")]
    LimitNotConverged { first: f64, second: f64 },

    #[error("no steering threshold: {direction} steerability already vanishes at loss 0")]
    NoThreshold { direction: &'static str },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("reconstruction needs both Alice bases among accepted records (missing {0})")]
    MissingBasis(&'static str),

    #[error("too few accepted records: {got} < {required}")]
    TooFewRecords { got: u64, required: u64 },

    #[error("degenerate sample: zero variance")]
    ZeroVariance,

    #[error("cutoff search failed: no grid point in [{lo}, {hi}] met the criteria")]
    CutoffSearchFailed { lo: f64, hi: f64 },

    #[error("no positive key rate on the gain grid (best {best_key_rate} at g = {best_gain})")]
    NoPositiveKey { best_gain: f64, best_key_rate: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
