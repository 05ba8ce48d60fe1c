use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Input paths as given; output paths relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub started_at_unix: f64,
    pub elapsed_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: usize,
    pub final_mean_abs_gap: f64,
    pub final_expected_reward: f64,
    pub wall_clock_secs: f64,
}

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub created_at_unix: f64,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_stage: Option<String>,
    pub calibration: Option<CalibrationModel>,
    pub metrics: Option<MetricsReport>,
    pub training: Option<TrainingSummary>,
    pub warnings: Vec<String>,
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_at_unix: unix_now(),
            config: config.clone(),
            inputs: Vec::new(),
            stages: Vec::new(),
            failed_stage: None,
            calibration: None,
            metrics: None,
            training: None,
            warnings: Vec::new(),
        }
    }

    /// Records an input's digest once, however many stages read it.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        if self.inputs.iter().any(|d| d.path == shown) {
            return Ok(());
        }
        let sha256 = digest_file(path)?;
        self.inputs.push(FileDigest {
            path: shown,
            sha256,
        });
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Creates the next free `run-NNNN` directory under `out`. Existing runs are
/// never reused.
pub fn create_run_dir(out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut next = 1;
    for entry in fs::read_dir(out).map_err(|e| Error::io(out, e))? {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        let name = entry.file_name();
        if let Some(n) = name
            .to_str()
            .and_then(|s| s.strip_prefix("run-"))
            .and_then(|s| s.parse::<u32>().ok())
        {
            next = next.max(n + 1);
        }
    }
    loop {
        let dir = out.join(format!("run-{next:04}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
}
