use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::data::dataset::DatasetError;
use crate::data::parse::ParseError;
use crate::data::prompts::TemplateError;
use crate::data::provider::ProviderError;
use crate::entropy::EntropyError;
use crate::grpo::TrainingError;
use crate::metrics::MetricsError;
use crate::rewards::RewardError;

/// Top-level error for pipeline stages and the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Entropy(#[from] EntropyError),

    #[error(transparent)]
    Calibration(#[from] CalibrationError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Reward(#[from] RewardError),

    #[error(transparent)]
    Training(#[from] TrainingError),

    #[error(transparent)]
    Template(#[from] TemplateError),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    /// Failure while processing one record.
    #[error("record {id:?}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn record(id: &str, source: impl Into<Error>) -> Self {
        Error::Record {
            id: id.to_string(),
            source: Box::new(source.into()),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data/alignment, 4 provider, 5 numerical/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Template(_) => 2,
            Error::Alignment(_)
            | Error::Data(_)
            | Error::Dataset(_)
            | Error::Parse(_)
            | Error::Io { .. }
            | Error::Json(_) => 3,
            Error::Provider(_) => 4,
            Error::Record { source, .. } => source.exit_code(),
            Error::Entropy(e) => match e {
                EntropyError::InvalidInput(_) | EntropyError::DegenerateEmbedding { .. } => 3,
                _ => 5,
            },
            Error::Calibration(e) => match e {
                CalibrationError::InseparableData | CalibrationError::TooFewPoints { .. } => 3,
                CalibrationError::InvalidInput(_) => 3,
            },
            Error::Metrics(_) => 3,
            Error::Reward(_) => 3,
            Error::Training(e) => match e {
                TrainingError::InvalidConfig(_) => 2,
                TrainingError::UnknownQuestion(_) => 3,
                TrainingError::Divergence { .. } => 5,
            },
        }
    }
}
