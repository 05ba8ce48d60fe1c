//! Stage commands with numbered run directories and a manifest per run.
//!
//! Each command creates `<out>/run-NNNN/`, writes its outputs there and keeps
//! `manifest.json` up to date after every stage. A failing stage leaves the
//! outputs written so far plus `failed_stage` in the manifest.
//!
//! Seeds: the calibration split uses `derive_seed(seed, "calibrate")` and the
//! trainer uses `derive_seed(seed, "train-sim")`, which overrides
//! `trainer.seed` in the resolved config.

mod config;
mod manifest;
pub mod stages;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{
    CalibrationSettings, LoraSettings, MetricsSettings, Paths, RunConfig, SamplingSettings,
};
pub use manifest::{
    create_run_dir, digest_file, sha256_hex, FileDigest, RunManifest, StageRecord, StageStatus,
    TrainingSummary, MANIFEST_FILE,
};

use crate::data::dataset::{
    load_dataset, read_jsonl, save_dataset, write_jsonl, EmbeddingRecord, PredictionRecord,
    QaRecord,
};
use crate::data::provider::{self, ProviderMode};
use crate::error::{Error, Result};
use crate::grpo::train;
use crate::metrics::MetricsReport;
use crate::seed::derive_seed;
use manifest::unix_now;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const STANDARD_ANSWERS_FILE: &str = "standard_answers.jsonl";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_TABLE_FILE: &str = "metrics.txt";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const TRAINING_REPORT_FILE: &str = "training_report.json";
pub const REWARD_CURVE_FILE: &str = "reward_curve.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Where a finished command wrote its outputs.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

/// Applies seed derivation so the manifest shows the seeds actually used.
pub fn resolve(config: &RunConfig) -> RunConfig {
    let mut cfg = config.clone();
    cfg.trainer.seed = derive_seed(cfg.seed, "train-sim");
    cfg
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Files under `dir` (not recursing), as digests relative to `root`.
fn output_digests(root: &Path, dir: &Path) -> Vec<FileDigest> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .filter_map(|p| {
            let sha256 = digest_file(&p).ok()?;
            let rel = p.strip_prefix(root).unwrap_or(&p);
            Some(FileDigest {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256,
            })
        })
        .collect()
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    /// Stages write into their own subdirectories (pipeline) or the run root.
    nested: bool,
}

impl Run {
    fn start(command: &str, config: &RunConfig, out: &Path, nested: bool) -> Result<Self> {
        let dir = create_run_dir(out)?;
        let manifest = RunManifest::new(command, config);
        manifest.save(&dir)?;
        log::info!("{command}: writing to {}", dir.display());
        Ok(Self {
            dir,
            manifest,
            nested,
        })
    }

    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&Path, &mut RunManifest) -> Result<T>,
    ) -> Result<T> {
        let stage_dir = if self.nested {
            self.dir.join(name)
        } else {
            self.dir.clone()
        };
        fs::create_dir_all(&stage_dir).map_err(|e| Error::io(&stage_dir, e))?;
        let started_at_unix = unix_now();
        let clock = Instant::now();
        let result = f(&stage_dir, &mut self.manifest);
        let elapsed_secs = clock.elapsed().as_secs_f64();
        let (status, error) = match &result {
            Ok(_) => (StageStatus::Ok, None),
            Err(e) => {
                log::error!("stage {name} failed: {e}");
                self.manifest.failed_stage = Some(name.to_string());
                (StageStatus::Failed, Some(e.to_string()))
            }
        };
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            status,
            started_at_unix,
            elapsed_secs,
            error,
            outputs: output_digests(&self.dir, &stage_dir),
        });
        let saved = self.manifest.save(&self.dir);
        let value = result?;
        saved?;
        Ok(value)
    }

    fn finish(self) -> RunOutcome {
        RunOutcome {
            run_dir: self.dir,
            manifest: self.manifest,
        }
    }
}

fn add_warnings(manifest: &mut RunManifest, warnings: Vec<String>) {
    for w in &warnings {
        log::warn!("{w}");
    }
    manifest.warnings.extend(warnings);
}

fn load_input<T>(manifest: &mut RunManifest, path: &Path, load: impl FnOnce(&Path) -> T) -> Result<T> {
    // parse errors take precedence over digesting so they carry a line number
    let value = load(path);
    manifest.add_input(path)?;
    Ok(value)
}

fn score_stage(
    dir: &Path,
    m: &mut RunManifest,
    records: Vec<QaRecord>,
    embeddings: &[EmbeddingRecord],
) -> Result<Vec<QaRecord>> {
    let scored = stages::score_records(records, embeddings, &m.config.kernel)?;
    add_warnings(m, scored.warnings);
    save_dataset(&dir.join(DATASET_FILE), &scored.records)?;
    Ok(scored.records)
}

fn calibrate_stage(dir: &Path, m: &mut RunManifest, records: Vec<QaRecord>) -> Result<Vec<QaRecord>> {
    let seed = derive_seed(m.config.seed, "calibrate");
    let cal = stages::calibrate_records(records, &m.config.calibration, seed)?;
    log::info!(
        "calibrate: A={} B={} on {} held-out records",
        cal.model.slope_a,
        cal.model.intercept_b,
        cal.held_out.len()
    );
    save_dataset(&dir.join(DATASET_FILE), &cal.records)?;
    write_json(&dir.join(CALIBRATION_FILE), &cal.model)?;
    m.calibration = Some(cal.model);
    Ok(cal.records)
}

fn train_stage(dir: &Path, m: &mut RunManifest, records: &[QaRecord]) -> Result<Vec<PredictionRecord>> {
    let targets = stages::training_targets(records, m.config.reward)?;
    let (policy, report) = train(&targets, m.config.reward, &m.config.trainer)?;
    let predictions = stages::policy_predictions(&policy, m.config.trainer.sampling_temperature);
    write_json(&dir.join(TRAINING_REPORT_FILE), &report)?;
    write_text(&dir.join(REWARD_CURVE_FILE), &report.curve_csv())?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &predictions)?;
    if report.format_failures > 0 {
        add_warnings(
            m,
            vec![format!("{} sampled predictions failed to parse", report.format_failures)],
        );
    }
    m.training = Some(TrainingSummary {
        steps: report.config.steps,
        final_mean_abs_gap: report.final_mean_abs_gap,
        final_expected_reward: report.final_expected_reward,
        wall_clock_secs: report.wall_clock_secs,
    });
    Ok(predictions)
}

fn evaluate_stage(
    dir: &Path,
    m: &mut RunManifest,
    records: &[QaRecord],
    predictions: &[PredictionRecord],
) -> Result<MetricsReport> {
    let report = stages::evaluate_predictions(records, predictions, m.config.metrics.bins)?;
    write_json(&dir.join(METRICS_JSON_FILE), &report)?;
    write_text(&dir.join(METRICS_TABLE_FILE), &report.to_table())?;
    write_text(&dir.join(RELIABILITY_FILE), &report.reliability_csv())?;
    m.metrics = Some(report.clone());
    Ok(report)
}

/// Fills `entropy_score` from `paths.embeddings`.
pub fn cmd_score(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let cfg = resolve(config);
    let dataset = cfg.require_path(&cfg.paths.dataset, "dataset")?;
    let embeddings = cfg.require_path(&cfg.paths.embeddings, "embeddings")?;
    let mut run = Run::start("score", &cfg, out, false)?;
    run.stage("score", |dir, m| {
        let records = load_input(m, &dataset, load_dataset)??;
        let emb: Vec<EmbeddingRecord> = load_input(m, &embeddings, read_jsonl)??;
        score_stage(dir, m, records, &emb)
    })?;
    Ok(run.finish())
}

/// Fits Platt scaling on a seeded held-out split and fills `u_cal`.
pub fn cmd_calibrate(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let cfg = resolve(config);
    let dataset = cfg.require_path(&cfg.paths.dataset, "dataset")?;
    let mut run = Run::start("calibrate", &cfg, out, false)?;
    run.stage("calibrate", |dir, m| {
        let records = load_input(m, &dataset, load_dataset)??;
        calibrate_stage(dir, m, records)
    })?;
    Ok(run.finish())
}

/// Scores `paths.predictions` against the dataset's labels.
pub fn cmd_evaluate(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let cfg = resolve(config);
    let dataset = cfg.require_path(&cfg.paths.dataset, "dataset")?;
    let predictions = cfg.require_path(&cfg.paths.predictions, "predictions")?;
    let mut run = Run::start("evaluate", &cfg, out, false)?;
    run.stage("evaluate", |dir, m| {
        let records = load_input(m, &dataset, load_dataset)??;
        let preds: Vec<PredictionRecord> = load_input(m, &predictions, read_jsonl)??;
        evaluate_stage(dir, m, &records, &preds)
    })?;
    Ok(run.finish())
}

/// Trains the toy policy against the configured reward.
pub fn cmd_train_sim(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let cfg = resolve(config);
    let dataset = cfg.require_path(&cfg.paths.dataset, "dataset")?;
    let mut run = Run::start("train-sim", &cfg, out, false)?;
    run.stage("train-sim", |dir, m| {
        let records = load_input(m, &dataset, load_dataset)??;
        train_stage(dir, m, &records)
    })?;
    Ok(run.finish())
}

/// collect (when no embeddings file is given), score, calibrate, train-sim
/// and evaluate, each in its own subdirectory of one run.
pub fn cmd_pipeline(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let cfg = resolve(config);
    let dataset = cfg.require_path(&cfg.paths.dataset, "dataset")?;
    if cfg.paths.embeddings.is_none() {
        cfg.provider.validate()?;
    }
    let mut run = Run::start("pipeline", &cfg, out, true)?;

    let records = match cfg.paths.embeddings.clone() {
        Some(emb_path) => run.stage("score", |dir, m| {
            let records = load_input(m, &dataset, load_dataset)??;
            let emb: Vec<EmbeddingRecord> = load_input(m, &emb_path, read_jsonl)??;
            score_stage(dir, m, records, &emb)
        })?,
        None => {
            let (records, emb) = run.stage("collect", |dir, m| {
                let records = load_input(m, &dataset, load_dataset)??;
                if m.config.provider.mode == ProviderMode::Fixture {
                    let fx = m.config.provider.fixture_dir.clone().expect("validated");
                    for name in [
                        provider::STANDARD_ANSWERS_FILE,
                        provider::SAMPLES_FILE,
                        provider::EMBEDDINGS_FILE,
                    ] {
                        let p = fx.join(name);
                        if p.exists() {
                            m.add_input(&p)?;
                        }
                    }
                }
                let p = provider::connect(&m.config.provider)?;
                let c = stages::collect(records, p.as_ref(), &m.config.sampling)?;
                add_warnings(m, c.warnings);
                save_dataset(&dir.join(DATASET_FILE), &c.records)?;
                write_jsonl(&dir.join(STANDARD_ANSWERS_FILE), &c.standard_answers)?;
                write_jsonl(&dir.join(GENERATIONS_FILE), &c.samples)?;
                write_jsonl(&dir.join(EMBEDDINGS_FILE), &c.embeddings)?;
                Ok((c.records, c.embeddings))
            })?;
            run.stage("score", |dir, m| score_stage(dir, m, records, &emb))?
        }
    };
    let records = run.stage("calibrate", |dir, m| calibrate_stage(dir, m, records))?;
    let predictions = run.stage("train-sim", |dir, m| train_stage(dir, m, &records))?;
    run.stage("evaluate", |dir, m| {
        evaluate_stage(dir, m, &records, &predictions)
    })?;
    Ok(run.finish())
}
