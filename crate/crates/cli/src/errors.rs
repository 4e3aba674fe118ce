//! Error taxonomy mapped onto process exit codes.

use bacalarm_core::detector::DetectorError;
use bacalarm_core::eval::EvalError;
use bacalarm_core::features::FeatureError;
use bacalarm_core::miner::MinerError;
use bacalarm_core::seqmodel::SeqModelError;
use bacalarm_core::traffic::TrafficError;
use bacalarm_sim::SimError;
use thiserror::Error;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONNECTIVITY: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_SCHEMA: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

/// One failure class per exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("input: {0}")]
    Input(String),
    #[error("connectivity: {0}")]
    Connectivity(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Connectivity(_) => EXIT_CONNECTIVITY,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
            CliError::Schema(_) => EXIT_SCHEMA,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TrafficError> for CliError {
    fn from(e: TrafficError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MinerError> for CliError {
    fn from(e: MinerError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SeqModelError> for CliError {
    fn from(e: SeqModelError) -> Self {
        match e {
            SeqModelError::EmptyCorpus | SeqModelError::LabelLeak { .. } => {
                CliError::Degenerate(e.to_string())
            }
            SeqModelError::Malformed(_) => CliError::Schema(e.to_string()),
            SeqModelError::EmptyInput => CliError::Input(e.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::DegenerateLabels => CliError::Degenerate(e.to_string()),
            DetectorError::Schema { .. } | DetectorError::Malformed(_) => {
                CliError::Schema(e.to_string())
            }
            DetectorError::Io(_) | DetectorError::ShapeMismatch { .. }
            | DetectorError::NonFinite { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidFraction(_) => CliError::Usage(e.to_string()),
            EvalError::Stratify { .. } | EvalError::EmptyInput => {
                CliError::Degenerate(e.to_string())
            }
            EvalError::Shape { .. } | EvalError::Io(_) | EvalError::Malformed(_) => {
                CliError::Input(e.to_string())
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Transport { .. } | SimError::MalformedReply => {
                CliError::Connectivity(e.to_string())
            }
            SimError::EmptyKnowledge => CliError::Degenerate(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}
