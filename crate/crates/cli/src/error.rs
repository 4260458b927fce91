use obarrier::poly::PolyError;
use obarrier::runtime::{RuntimeError, StreamError};
use obarrier::sos::SosError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model: {0}")]
    Model(#[from] PolyError),
    #[error("synthesis failed: {0}")]
    Synthesis(SosError),
    #[error("{0}")]
    Vanishing(String),
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    Runtime(RuntimeError),
    #[error("{violated} of {checked} bounds exceed the Monte Carlo estimate")]
    Violations { violated: usize, checked: usize },
}

impl CliError {
    /// 0 success, 1 usage or i/o, 2 synthesis, 3 vanishing q, 4 malformed
    /// input, 5 validation violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Synthesis(_) => 2,
            CliError::Vanishing(_) => 3,
            CliError::Malformed(_) => 4,
            CliError::Violations { .. } => 5,
            _ => 1,
        }
    }
}

impl From<RuntimeError> for CliError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Synthesis(s) => CliError::Synthesis(s),
            e @ RuntimeError::VanishingObservationProbability { .. } => CliError::Vanishing(e.to_string()),
            e => CliError::Runtime(e),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        let msg = e.to_string();
        match e {
            StreamError::Rejected {
                source: RuntimeError::VanishingObservationProbability { .. },
                ..
            } => CliError::Vanishing(msg),
            StreamError::Rejected { .. } | StreamError::Malformed { .. } => CliError::Malformed(msg),
            StreamError::Io(io) => CliError::Io(io),
        }
    }
}
