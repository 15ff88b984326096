use std::fmt;

use rxnctx_core::analysis::AnalysisError;
use rxnctx_core::config::ConfigError;
use rxnctx_core::finetune::FinetuneError;
use rxnctx_core::numerics::NumericsError;
use rxnctx_core::pretrain::PretrainError;
use rxnctx_core::vocab::VocabError;

/// Exit 1 for bad input or configuration, exit 2 for failures while running.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) => write!(f, "error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

pub type CliResult<T> = Result<T, Failure>;

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("writing output: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(format!("serializing output: {e}"))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(format!("{e}; check the file for typos or unknown keys"))
    }
}

impl From<VocabError> for Failure {
    fn from(e: VocabError) -> Self {
        Failure::Invalid(format!("vocabulary: {e}"))
    }
}

impl From<PretrainError> for Failure {
    fn from(e: PretrainError) -> Self {
        match e {
            PretrainError::Config(_)
            | PretrainError::Checkpoint(_)
            | PretrainError::EmptyCorpus
            | PretrainError::Encoder(_)
            | PretrainError::TargetOutOfRange { .. } => Failure::Invalid(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<FinetuneError> for Failure {
    fn from(e: FinetuneError) -> Self {
        match e {
            FinetuneError::Numerics(_) | FinetuneError::Metric(_) => Failure::Runtime(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NonFinite(_) | AnalysisError::Empty | AnalysisError::Pretrain(_) => {
                Failure::Runtime(e.to_string())
            }
            other => Failure::Invalid(other.to_string()),
        }
    }
}

pub fn runtime(msg: impl fmt::Display) -> Failure {
    Failure::Runtime(msg.to_string())
}

/// Checkpoint problems at load time are input problems.
pub fn checkpoint_error(path: &std::path::Path, e: NumericsError) -> Failure {
    Failure::Invalid(format!("checkpoint {}: {e}", path.display()))
}
