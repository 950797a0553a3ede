use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid qubit pair ({0}, {1}): {2}")]
    InvalidPair(usize, usize, String),
    #[error("invalid qubit index {index} (qubit count {count})")]
    InvalidIndex { index: usize, count: usize },
    #[error("data qubits are already measured")]
    AlreadyMeasured,
    #[error("malformed circuit: {0}")]
    MalformedCircuit(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("post-selection discarded every shot ({total} shots)")]
    EmptyPostselection { total: u64 },
    #[error("degenerate sampling angles for frequency {frequency} (condition number {condition:e})")]
    DegenerateAngles { frequency: usize, condition: f64 },
    #[error("Fourier grid for N = {n} needs {expected} values, got {got}")]
    InvalidGridLength { n: usize, expected: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid noise or confusion parameter: {0}")]
    InvalidProbability(String),
    #[error("confusion model is not invertible: {0}")]
    NonInvertible(String),
    #[error("parity correction factor {factor:e} too small for reliable mitigation")]
    AmplificationOverflow { factor: f64 },
    #[error("closed-form parity correction requires a symmetric confusion model")]
    AsymmetricModel,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
