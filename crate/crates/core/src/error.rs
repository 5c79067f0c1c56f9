use thiserror::Error;

use crate::model::Azimuth;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("amplitude at index {index} is not positive ({value})")]
    NonPositiveAmplitude { index: usize, value: f64 },

    #[error("pdp power at bin {index} is invalid ({value})")]
    InvalidPower { index: usize, value: f64 },

    #[error("pdp has no positive power bin")]
    AllZeroPdp,

    #[error("noise floor unknown for pdp")]
    NoiseFloorUnknown,

    #[error("noise tail window is empty (tail fraction {0})")]
    TailWindowEmpty(f64),

    #[error("no records at track position {0}")]
    NoRecordsAtPosition(usize),

    #[error("missing record for position {position} at azimuth {azimuth}")]
    MissingRecord { position: usize, azimuth: Azimuth },

    #[error("no signal for azimuth {0}")]
    NoSignal(Azimuth),

    #[error("no signal at track position {0} (zero synthesized power)")]
    ZeroPower(usize),

    #[error("duplicate record for position {position} at azimuth {azimuth}")]
    DuplicateRecord { position: usize, azimuth: Azimuth },

    #[error("position index {position} outside track of {num_positions} positions")]
    PositionOutOfRange { position: usize, num_positions: usize },

    #[error("invalid azimuth set: {0}")]
    InvalidAzimuthSet(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("need at least 2 paths, got {0}")]
    TooFewPaths(usize),

    #[error("max lag {max_lag} leaves fewer than {min_pairs} overlapping pairs")]
    InsufficientPairs { max_lag: f64, min_pairs: usize },

    #[error("need at least {needed} lags, got {got}")]
    TooFewLags { needed: usize, got: usize },

    #[error("matrix is not positive definite even with jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("parse error in {path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid file {path}: {message}")]
    Format { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 3 for input validation problems, 4 for numeric or
    /// degenerate failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AllZeroPdp
            | Error::NoSignal(_)
            | Error::ZeroPower(_)
            | Error::Degenerate(_)
            | Error::TooFewPaths(_)
            | Error::TooFewSamples { .. }
            | Error::InsufficientPairs { .. }
            | Error::TooFewLags { .. }
            | Error::NotPositiveDefinite { .. } => 4,
            _ => 3,
        }
    }
}
