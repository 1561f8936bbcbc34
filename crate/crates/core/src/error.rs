use thiserror::Error;

use crate::config::{BuildError, ConfigError};
use crate::domain::DomainError;
use crate::extraction::ExtractionError;
use crate::gateway::GatewayError;
use crate::grouping::GroupingError;
use crate::io::InputError;
use crate::optimizer::OptimizerError;
use crate::pipeline::{PipelineFailure, WhatIfError};
use crate::sensitivity::SensitivityError;

/// Exit status for bad input or configuration.
pub const EXIT_INPUT: i32 = 1;
/// Exit status for LLM endpoint failures and unusable answers.
pub const EXIT_GATEWAY: i32 = 2;
/// Exit status for violated internal invariants.
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    WhatIf(#[from] WhatIfError),
    #[error(transparent)]
    Pipeline(#[from] Box<PipelineFailure>),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Result { path: String, message: String },
}

impl From<BuildError> for Error {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => Error::Config(c),
            BuildError::Gateway(g) => Error::Gateway(g),
        }
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Config(_) | Error::Domain(_) | Error::Result { .. } => {
                EXIT_INPUT
            }
            Error::Output { .. } => EXIT_INPUT,
            Error::Gateway(_) => EXIT_GATEWAY,
            Error::Extraction(e) => match e {
                ExtractionError::EmptyInput => EXIT_INPUT,
                ExtractionError::EmptyChunk | ExtractionError::ChunkTooLarge { .. } => {
                    EXIT_INTERNAL
                }
                // Strict mode turns a label the model invented into a hard stop.
                ExtractionError::UnknownQaLabel { .. }
                | ExtractionError::UnparseableResponse(_)
                | ExtractionError::IdMismatch(_)
                | ExtractionError::Gateway { .. } => EXIT_GATEWAY,
            },
            Error::Grouping(e) => match e {
                GroupingError::NoAsrs | GroupingError::InvalidConfig(_) => EXIT_INPUT,
                GroupingError::NoConditionGroups => EXIT_INTERNAL,
                GroupingError::UnparseableResponse(_)
                | GroupingError::UnknownCgId { .. }
                | GroupingError::Gateway(_) => EXIT_GATEWAY,
            },
            Error::Optimizer(_) => EXIT_INTERNAL,
            Error::Sensitivity(e) => match e {
                SensitivityError::Optimizer(_) => EXIT_INTERNAL,
                _ => EXIT_INPUT,
            },
            Error::WhatIf(e) => match e {
                WhatIfError::Optimizer(_) => EXIT_INTERNAL,
                WhatIfError::Sensitivity(s) => Error::Sensitivity(s.clone()).exit_code(),
                _ => EXIT_INPUT,
            },
            Error::Pipeline(f) => f.source.exit_code(),
        }
    }
}
