use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::FitConfig;
use crate::data::provider::ProviderConfig;
use crate::entropy::KernelConfig;
use crate::error::{Error, Result};
use crate::grpo::TrainerConfig;
use crate::metrics::DEFAULT_BINS;
use crate::rewards::RewardKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Fraction of records held out for fitting, in (0, 1].
    pub split_fraction: f64,
    pub fit: FitConfig,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            split_fraction: 0.2,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub bins: usize,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS }
    }
}

/// Generation settings for the collect stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    /// K, the number of sampled generations scored per question.
    pub samples_per_question: usize,
    pub entropy_temperature: f64,
    pub standard_temperature: f64,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            samples_per_question: 10,
            entropy_temperature: 1.0,
            standard_temperature: 0.1,
        }
    }
}

/// Adapter settings of the full-scale fine-tune. Recorded in manifests, never
/// used by the toy trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraSettings {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for LoraSettings {
    fn default() -> Self {
        Self {
            rank: 16,
            alpha: 32.0,
            dropout: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    /// When absent, `pipeline` collects embeddings through the provider.
    pub embeddings: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

/// Every knob of a run, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; stage seeds are derived from it.
    pub seed: u64,
    pub kernel: KernelConfig,
    pub calibration: CalibrationSettings,
    pub metrics: MetricsSettings,
    pub reward: RewardKind,
    pub trainer: TrainerConfig,
    pub provider: ProviderConfig,
    pub sampling: SamplingSettings,
    pub lora: LoraSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kernel: KernelConfig::default(),
            calibration: CalibrationSettings::default(),
            metrics: MetricsSettings::default(),
            reward: RewardKind::Entropy,
            trainer: TrainerConfig::default(),
            provider: ProviderConfig::default(),
            sampling: SamplingSettings::default(),
            lora: LoraSettings::default(),
            paths: Paths::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            let joined: PathBuf = base
                .join(&*path)
                .components()
                .filter(|c| !matches!(c, std::path::Component::CurDir))
                .collect();
            *path = if joined.as_os_str().is_empty() {
                PathBuf::from(".")
            } else {
                joined
            };
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Loads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        rebase(base, &mut cfg.paths.dataset);
        rebase(base, &mut cfg.paths.embeddings);
        rebase(base, &mut cfg.paths.predictions);
        rebase(base, &mut cfg.provider.fixture_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.calibration.split_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!(
                "calibration.split_fraction must be in (0, 1], got {f} (empty calibration set)"
            )));
        }
        if self.metrics.bins == 0 {
            return Err(Error::Config("metrics.bins must be >= 1".into()));
        }
        if self.sampling.samples_per_question == 0 {
            return Err(Error::Config("sampling.samples_per_question must be >= 1".into()));
        }
        for (name, t) in [
            ("entropy_temperature", self.sampling.entropy_temperature),
            ("standard_temperature", self.sampling.standard_temperature),
        ] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("sampling.{name} must be >= 0")));
            }
        }
        if let KernelConfig::Rbf {
            bandwidth: crate::entropy::BandwidthRule::Fixed(b),
        } = self.kernel
        {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config("kernel bandwidth must be > 0".into()));
            }
        }
        self.trainer.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub(crate) fn require_path(&self, p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::Config(format!("paths.{name} is required for this command")))
    }
}
