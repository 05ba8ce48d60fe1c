use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::runtime::Runtime;
use tokio::sync::Semaphore;

use super::{Embeddings, GenerateRequest, Provider, ProviderConfig, ProviderError};
use crate::data::prompts::judge_prompt;

/// Async client for OpenAI-compatible `/chat/completions` and `/embeddings`.
///
/// At most `max_concurrent_requests` HTTP requests are in flight at once
/// across all clones. Each request retries independently on 429, 5xx and
/// transport errors with exponential backoff and jitter.
#[derive(Debug, Clone)]
pub struct LiveClient {
    http: reqwest::Client,
    base_url: String,
    token: Option<String>,
    config: ProviderConfig,
    permits: Arc<Semaphore>,
    retries: Arc<AtomicUsize>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    #[serde(default)]
    index: usize,
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

impl LiveClient {
    /// Reads the bearer token from the configured environment variable, if set.
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let token = std::env::var(&config.auth_token_env).ok();
        Self::with_token(config, token)
    }

    pub fn with_token(config: ProviderConfig, token: Option<String>) -> Result<Self, ProviderError> {
        let base_url = config
            .endpoint
            .clone()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| ProviderError::Config("live mode requires an endpoint".into()))?
            .trim_end_matches('/')
            .to_string();
        if config.max_concurrent_requests == 0 {
            return Err(ProviderError::Config(
                "max_concurrent_requests must be >= 1".into(),
            ));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs.max(0.001)))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            http,
            base_url,
            token,
            permits: Arc::new(Semaphore::new(config.max_concurrent_requests)),
            retries: Arc::new(AtomicUsize::new(0)),
            config,
        })
    }

    /// Total retries performed so far by this client and its clones.
    pub fn retry_count(&self) -> usize {
        self.retries.load(Ordering::SeqCst)
    }

    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let exp = self
            .config
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.max_backoff_ms);
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        let delay = Duration::from_millis((exp as f64 * jitter) as u64);
        match retry_after {
            Some(ra) => delay.max(ra.min(Duration::from_millis(self.config.max_backoff_ms))),
            None => delay,
        }
    }

    async fn post_json(&self, path: &str, body: &Value, context: &str) -> Result<Value, ProviderError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut attempt = 0u32;
        loop {
            let (can_retry, retry_after, err): (bool, Option<Duration>, ProviderError) = {
                let _permit = self
                    .permits
                    .acquire()
                    .await
                    .expect("semaphore is never closed");
                let mut req = self.http.post(&url).json(body);
                if let Some(t) = &self.token {
                    req = req.bearer_auth(t);
                }
                match req.send().await {
                    Ok(resp) => {
                        let status = resp.status();
                        let retry_after = resp
                            .headers()
                            .get(reqwest::header::RETRY_AFTER)
                            .and_then(|v| v.to_str().ok())
                            .and_then(|v| v.trim().parse::<f64>().ok())
                            .map(Duration::from_secs_f64);
                        let text = resp.text().await.map_err(|e| ProviderError::Network {
                            context: context.to_string(),
                            message: e.to_string(),
                        });
                        match text {
                            Ok(text) if status.is_success() => {
                                return serde_json::from_str(&text).map_err(|e| {
                                    ProviderError::Decode {
                                        context: context.to_string(),
                                        message: e.to_string(),
                                    }
                                });
                            }
                            Ok(text) => (
                                retryable(status),
                                retry_after,
                                ProviderError::Http {
                                    context: context.to_string(),
                                    status: status.as_u16(),
                                    body: text.chars().take(512).collect(),
                                },
                            ),
                            Err(e) => (true, None, e),
                        }
                    }
                    Err(e) => (
                        true,
                        None,
                        ProviderError::Network {
                            context: context.to_string(),
                            message: e.to_string(),
                        },
                    ),
                }
            };

            if !can_retry || attempt >= self.config.max_retries {
                return Err(err);
            }
            let delay = self.backoff(attempt, retry_after);
            attempt += 1;
            self.retries.fetch_add(1, Ordering::SeqCst);
            log::warn!(
                "{context}: retry {attempt}/{} in {:?} after: {err}",
                self.config.max_retries,
                delay
            );
            tokio::time::sleep(delay).await;
        }
    }

    pub async fn chat(
        &self,
        model: &str,
        prompt: &str,
        temperature: f64,
        n: usize,
        context: &str,
    ) -> Result<Vec<String>, ProviderError> {
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        });
        let value = self.post_json("chat/completions", &body, context).await?;
        let mut resp: ChatResponse =
            serde_json::from_value(value).map_err(|e| ProviderError::Decode {
                context: context.to_string(),
                message: e.to_string(),
            })?;
        resp.choices.sort_by_key(|c| c.index);
        if resp.choices.len() != n {
            return Err(ProviderError::Decode {
                context: context.to_string(),
                message: format!("expected {n} choices, got {}", resp.choices.len()),
            });
        }
        Ok(resp
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }

    pub async fn embeddings(
        &self,
        model: &str,
        texts: &[String],
        context: &str,
    ) -> Result<Embeddings, ProviderError> {
        let body = json!({ "model": model, "input": texts });
        let value = self.post_json("embeddings", &body, context).await?;
        let mut resp: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| ProviderError::Decode {
                context: context.to_string(),
                message: e.to_string(),
            })?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.len() != texts.len() {
            return Err(ProviderError::Decode {
                context: context.to_string(),
                message: format!("expected {} embeddings, got {}", texts.len(), resp.data.len()),
            });
        }
        Ok(Embeddings {
            vectors: resp.data.into_iter().map(|d| d.embedding).collect(),
            model_tag: resp.model.unwrap_or_else(|| model.to_string()),
        })
    }
}

/// Blocking [`Provider`] over a [`LiveClient`] with its own runtime.
pub struct LiveProvider {
    client: LiveClient,
    runtime: Runtime,
}

impl LiveProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            client: LiveClient::new(config)?,
            runtime,
        })
    }

    pub fn client(&self) -> &LiveClient {
        &self.client
    }
}

impl Provider for LiveProvider {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<String>, ProviderError> {
        let context = format!(
            "generate record_id={:?} purpose={}",
            request.record_id,
            request.purpose.as_str()
        );
        self.runtime.block_on(self.client.chat(
            &self.client.config.models.generator,
            request.prompt,
            request.temperature,
            request.n,
            &context,
        ))
    }

    fn embed(&self, record_id: &str, texts: &[String]) -> Result<Embeddings, ProviderError> {
        let context = format!("embed record_id={record_id:?}");
        self.runtime.block_on(self.client.embeddings(
            &self.client.config.models.embedder,
            texts,
            &context,
        ))
    }

    fn judge(
        &self,
        record_id: &str,
        question: &str,
        gold_answer: &str,
        answer: &str,
    ) -> Result<String, ProviderError> {
        let context = format!("judge record_id={record_id:?}");
        let prompt = judge_prompt(question, gold_answer, answer);
        let mut out = self.runtime.block_on(self.client.chat(
            &self.client.config.models.judge,
            &prompt,
            0.0,
            1,
            &context,
        ))?;
        Ok(out.pop().unwrap_or_default())
    }
}
