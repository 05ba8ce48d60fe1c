//! Generation, embedding and judging services.
//!
//! Two implementations: [`FixtureProvider`] replays stored files and never
//! touches the network; [`LiveProvider`] speaks the OpenAI-compatible
//! chat-completions and embeddings wire format.

mod fixture;
mod live;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{FixtureKey, FixtureProvider, EMBEDDINGS_FILE, SAMPLES_FILE, STANDARD_ANSWERS_FILE};
pub use live::{LiveClient, LiveProvider};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider config: {0}")]
    Config(String),

    #[error("fixture incomplete: no entry for {0}")]
    FixtureIncomplete(FixtureKey),

    #[error("fixture mismatch for {key}: {message}")]
    FixtureMismatch { key: FixtureKey, message: String },

    #[error("fixture load failed: {0}")]
    FixtureLoad(String),

    #[error("{context}: HTTP {status}: {body}")]
    Http {
        context: String,
        status: u16,
        body: String,
    },

    #[error("{context}: {message}")]
    Network { context: String, message: String },

    #[error("{context}: unexpected response: {message}")]
    Decode { context: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Low-temperature best-effort answer.
    StandardAnswer,
    /// Stochastic samples for entropy scoring.
    EntropySample,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::StandardAnswer => "standard_answer",
            Purpose::EntropySample => "entropy_sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Live,
    #[default]
    Fixture,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ProviderMode::Live),
            "fixture" => Ok(ProviderMode::Fixture),
            other => Err(format!("unknown provider {other:?} (fixture|live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelNames {
    pub generator: String,
    pub embedder: String,
    pub judge: String,
}

impl Default for ModelNames {
    fn default() -> Self {
        Self {
            generator: "Qwen2.5-7B-Instruct".into(),
            embedder: "text-embedding-3-small".into(),
            judge: "gpt-4o-mini".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: String,
    pub models: ModelNames,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_concurrent_requests: usize,
    pub fixture_dir: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Fixture,
            endpoint: None,
            auth_token_env: "OPENAI_API_KEY".into(),
            models: ModelNames::default(),
            request_timeout_secs: 60.0,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8000,
            max_concurrent_requests: 4,
            fixture_dir: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        match self.mode {
            ProviderMode::Fixture if self.fixture_dir.is_none() => Err(ProviderError::Config(
                "fixture mode requires fixture_dir".into(),
            )),
            ProviderMode::Live if self.endpoint.as_deref().is_none_or(str::is_empty) => Err(
                ProviderError::Config("live mode requires an endpoint".into()),
            ),
            ProviderMode::Live if self.auth_token_env.is_empty() => Err(ProviderError::Config(
                "live mode requires auth_token_env".into(),
            )),
            _ if self.max_concurrent_requests == 0 => Err(ProviderError::Config(
                "max_concurrent_requests must be >= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Request for `n` completions of one prompt.
#[derive(Debug, Clone)]
pub struct GenerateRequest<'a> {
    pub record_id: &'a str,
    pub purpose: Purpose,
    pub prompt: &'a str,
    pub temperature: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub vectors: Vec<Vec<f64>>,
    pub model_tag: String,
}

pub trait Provider {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<String>, ProviderError>;

    fn embed(&self, record_id: &str, texts: &[String]) -> Result<Embeddings, ProviderError>;

    /// Raw judge output; parse with [`crate::data::parse::parse_judgment`].
    fn judge(
        &self,
        record_id: &str,
        question: &str,
        gold_answer: &str,
        answer: &str,
    ) -> Result<String, ProviderError>;
}

/// Builds the provider selected by `config.mode`.
pub fn connect(config: &ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    config.validate()?;
    match config.mode {
        ProviderMode::Fixture => {
            let dir = config.fixture_dir.as_ref().expect("validated");
            Ok(Box::new(FixtureProvider::open(dir)?))
        }
        ProviderMode::Live => Ok(Box::new(LiveProvider::new(config.clone())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::default().validate().is_err());
        let fixture = ProviderConfig {
            fixture_dir: Some("fx".into()),
            ..ProviderConfig::default()
        };
        assert!(fixture.validate().is_ok());
        let live = ProviderConfig {
            mode: ProviderMode::Live,
            ..ProviderConfig::default()
        };
        assert!(live.validate().is_err());
        let live = ProviderConfig {
            mode: ProviderMode::Live,
            endpoint: Some("http://localhost:1/v1".into()),
            ..ProviderConfig::default()
        };
        assert!(live.validate().is_ok());
    }
}
