use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("graph is disconnected (p = {p:e})")]
    DisconnectedGraph { p: f64 },
    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("iterates diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("noise-floor guard failed: {0}")]
    GuardViolation(String),
}

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
