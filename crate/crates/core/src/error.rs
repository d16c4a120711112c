//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("qubit count {0} outside supported range 1..={1}")]
    QubitCountOutOfRange(usize, usize),

    #[error("qubit index {index} out of range for {n} qubits")]
    QubitIndexOutOfRange { index: usize, n: usize },

    #[error("duplicate qubit index {0}")]
    DuplicateQubitIndex(usize),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("state trace deviates from one by {deviation:e}")]
    TraceNotUnit { deviation: f64 },

    #[error("state has negative eigenvalue {eigenvalue:e}")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("expectation value has imaginary residue {residue:e}; state or operator is corrupted")]
    ImaginaryResidue { residue: f64 },

    #[error("outcome distribution weight {weight} outside [0, 1]; state is invalid")]
    InvalidOutcomeWeight { weight: f64 },

    #[error("trajectory normalization underflow ({norm:e}); realization aborted")]
    VanishingNorm { norm: f64 },

    #[error("measurement strength must be non-negative, got {0}")]
    NegativeStrength(f64),

    #[error("measurement strength zero is non-informative for finite ensembles")]
    ZeroStrength,

    #[error("input sample {0} outside [0, 1]")]
    InputOutOfRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("noise mode {mode} is not supported by the {protocol} protocol: {reason}")]
    UnsupportedNoiseMode {
        protocol: &'static str,
        mode: &'static str,
        reason: String,
    },

    #[error("ensemble size must be finite here")]
    InfiniteEnsemble,

    #[error("threshold undefined: denominator is not positive for washout count {0}")]
    ThresholdUndefined(usize),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
