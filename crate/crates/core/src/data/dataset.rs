//! Line-delimited JSON files: datasets, generations, embeddings, predictions.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
}

/// Records keyed by a unique id within a file.
pub trait Keyed {
    fn key(&self) -> &str;

    /// Per-record validation beyond what serde checks.
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    #[serde(default)]
    pub standard_answer: String,
    /// 1 incorrect, 0 correct, null until judged.
    #[serde(default)]
    pub incorrect: Option<u8>,
    #[serde(default)]
    pub entropy_score: Option<f64>,
    #[serde(default)]
    pub u_cal: Option<f64>,
}

impl QaRecord {
    pub fn new(id: impl Into<String>, question: impl Into<String>, gold: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            gold_answer: gold.into(),
            standard_answer: String::new(),
            incorrect: None,
            entropy_score: None,
            u_cal: None,
        }
    }

    pub fn is_incorrect(&self) -> Option<bool> {
        self.incorrect.map(|z| z == 1)
    }
}

impl Keyed for QaRecord {
    fn key(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if matches!(self.incorrect, Some(z) if z > 1) {
            return Err(format!("incorrect must be 0, 1 or null for id {:?}", self.id));
        }
        if matches!(self.entropy_score, Some(s) if !s.is_finite() || s < 0.0) {
            return Err(format!("entropy_score must be non-negative for id {:?}", self.id));
        }
        if matches!(self.u_cal, Some(u) if !(0.0..=1.0).contains(&u)) {
            return Err(format!("u_cal must lie in [0, 1] for id {:?}", self.id));
        }
        Ok(())
    }
}

/// K sampled texts for one record, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationBundle {
    pub id: String,
    pub temperature: f64,
    pub samples: Vec<String>,
}

impl Keyed for GenerationBundle {
    fn key(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if self.samples.is_empty() {
            return Err(format!("bundle {:?} has no samples", self.id));
        }
        Ok(())
    }
}

/// K embedding rows aligned with a bundle's sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub embed_model_tag: String,
    pub vectors: Vec<Vec<f64>>,
}

impl Keyed for EmbeddingRecord {
    fn key(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if self.vectors.is_empty() {
            return Err(format!("embedding record {:?} has no vectors", self.id));
        }
        Ok(())
    }
}

/// One predicted uncertainty per record id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub u: f64,
}

impl Keyed for PredictionRecord {
    fn key(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.u) {
            return Err(format!("prediction for {:?} is outside [0, 1]", self.id));
        }
        Ok(())
    }
}

/// Reads a JSONL file, skipping blank lines; ids must be unique.
pub fn read_jsonl<T: DeserializeOwned + Keyed>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_jsonl(&text, path)
}

pub fn parse_jsonl<T: DeserializeOwned + Keyed>(
    text: &str,
    path: &Path,
) -> Result<Vec<T>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate().map_err(|message| DatasetError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        if !seen.insert(record.key().to_string()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: record.key().to_string(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let werr = |source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(werr)?;
    f.write_all(to_jsonl(records).as_bytes()).map_err(werr)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaRecord>, DatasetError> {
    read_jsonl(path)
}

pub fn save_dataset(path: &Path, records: &[QaRecord]) -> Result<(), DatasetError> {
    write_jsonl(path, records)
}
