use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Embeddings, GenerateRequest, Provider, ProviderError, Purpose};
use crate::data::dataset::{read_jsonl, EmbeddingRecord, GenerationBundle};
use crate::data::parse::normalized_match;

pub const STANDARD_ANSWERS_FILE: &str = "standard_answers.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";

const TEMPERATURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureKey {
    pub record_id: String,
    pub purpose: String,
    pub temperature: Option<f64>,
}

impl fmt::Display for FixtureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record_id={:?} purpose={}", self.record_id, self.purpose)?;
        if let Some(t) = self.temperature {
            write!(f, " temperature={t}")?;
        }
        Ok(())
    }
}

/// Offline provider backed by JSONL files in one directory:
///
/// ```text
/// standard_answers.jsonl   {"id","temperature","samples":[text]}
/// samples.jsonl            {"id","temperature","samples":[text, ...]}
/// embeddings.jsonl         {"id","embed_model_tag","vectors":[[...], ...]}
/// ```
///
/// Judging compares the answer to the gold answer after case and whitespace
/// normalization.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    dir: PathBuf,
    standard: HashMap<String, GenerationBundle>,
    samples: HashMap<String, GenerationBundle>,
    embeddings: HashMap<String, EmbeddingRecord>,
}

fn load<T: serde::de::DeserializeOwned + crate::data::dataset::Keyed>(
    path: &Path,
) -> Result<HashMap<String, T>, ProviderError> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let records: Vec<T> =
        read_jsonl(path).map_err(|e| ProviderError::FixtureLoad(e.to_string()))?;
    Ok(records
        .into_iter()
        .map(|r| (r.key().to_string(), r))
        .collect())
}

impl FixtureProvider {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(ProviderError::FixtureLoad(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            standard: load(&dir.join(STANDARD_ANSWERS_FILE))?,
            samples: load(&dir.join(SAMPLES_FILE))?,
            embeddings: load(&dir.join(EMBEDDINGS_FILE))?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Provider for FixtureProvider {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<String>, ProviderError> {
        let key = FixtureKey {
            record_id: request.record_id.to_string(),
            purpose: request.purpose.as_str().to_string(),
            temperature: Some(request.temperature),
        };
        let table = match request.purpose {
            Purpose::StandardAnswer => &self.standard,
            Purpose::EntropySample => &self.samples,
        };
        let bundle = table
            .get(request.record_id)
            .filter(|b| (b.temperature - request.temperature).abs() <= TEMPERATURE_TOL)
            .ok_or_else(|| ProviderError::FixtureIncomplete(key.clone()))?;
        if bundle.samples.len() < request.n {
            return Err(ProviderError::FixtureMismatch {
                key,
                message: format!(
                    "{} samples stored, {} requested",
                    bundle.samples.len(),
                    request.n
                ),
            });
        }
        Ok(bundle.samples[..request.n].to_vec())
    }

    fn embed(&self, record_id: &str, texts: &[String]) -> Result<Embeddings, ProviderError> {
        let key = FixtureKey {
            record_id: record_id.to_string(),
            purpose: "embed".into(),
            temperature: None,
        };
        let rec = self
            .embeddings
            .get(record_id)
            .ok_or_else(|| ProviderError::FixtureIncomplete(key.clone()))?;
        if rec.vectors.len() != texts.len() {
            return Err(ProviderError::FixtureMismatch {
                key,
                message: format!(
                    "{} vectors stored for {} texts",
                    rec.vectors.len(),
                    texts.len()
                ),
            });
        }
        Ok(Embeddings {
            vectors: rec.vectors.clone(),
            model_tag: rec.embed_model_tag.clone(),
        })
    }

    fn judge(
        &self,
        _record_id: &str,
        _question: &str,
        gold_answer: &str,
        answer: &str,
    ) -> Result<String, ProviderError> {
        Ok(if normalized_match(gold_answer, answer) {
            "yes".into()
        } else {
            "no".into()
        })
    }
}
