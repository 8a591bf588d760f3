use std::fmt;

use edutree_core::corpus::CorpusError;
use edutree_core::datagen::DatagenError;
use edutree_core::llm::LlmError;
use edutree_core::metrics::MetricError;
use edutree_core::taxonomy::{OracleError, TaxonomyError, TreeError};

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input data (exit 1).
    Invalid(String),
    /// Backend or filesystem failure (exit 2).
    Runtime(String),
}

impl CliError {
    pub fn invalid(msg: impl fmt::Display) -> Self {
        Self::Invalid(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        Self::Runtime(msg.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Self::runtime(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<TaxonomyError> for CliError {
    fn from(e: TaxonomyError) -> Self {
        Self::invalid(e)
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::Oracle(OracleError::Backend(_)) => Self::runtime(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Network { .. } | LlmError::Status { .. } => Self::runtime(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::invalid(e)
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Io(inner) => inner.into(),
            _ => Self::invalid(e),
        }
    }
}
