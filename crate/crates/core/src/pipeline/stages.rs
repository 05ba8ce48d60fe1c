//! Stage logic on in-memory records. File handling lives in the commands.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;

use super::config::{CalibrationSettings, SamplingSettings};
use crate::calibration::{fit_platt, CalibrationDataset, CalibrationModel};
use crate::data::dataset::{EmbeddingRecord, GenerationBundle, PredictionRecord, QaRecord};
use crate::data::parse::{parse_answer, parse_judgment};
use crate::data::prompts::answer_prompt;
use crate::data::provider::{GenerateRequest, Provider, Purpose};
use crate::entropy::{score_embeddings, EmbeddingSet, KernelConfig};
use crate::error::{Error, Result};
use crate::grpo::{QuestionTarget, ToyPolicy};
use crate::metrics::{evaluate, EvaluationBatch, MetricsReport};
use crate::rewards::RewardKind;
use crate::seed::rng_for;

const MAX_LISTED_IDS: usize = 20;

fn list_ids(ids: &[&str]) -> String {
    let shown: Vec<String> = ids
        .iter()
        .take(MAX_LISTED_IDS)
        .map(|id| format!("{id:?}"))
        .collect();
    let more = ids.len().saturating_sub(MAX_LISTED_IDS);
    if more > 0 {
        format!("{} (and {more} more)", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// Errors unless `keys` covers exactly the dataset ids.
pub fn check_alignment<'a>(
    records: &[QaRecord],
    keys: impl IntoIterator<Item = &'a str>,
    what: &str,
) -> Result<()> {
    let keys: BTreeSet<&str> = keys.into_iter().collect();
    let ids: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let missing: Vec<&str> = records
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| !keys.contains(id))
        .collect();
    let extra: Vec<&str> = keys.iter().copied().filter(|k| !ids.contains(k)).collect();
    let mut problems = Vec::new();
    if !missing.is_empty() {
        problems.push(format!("no {what} for ids {}", list_ids(&missing)));
    }
    if !extra.is_empty() {
        problems.push(format!("{what} for unknown ids {}", list_ids(&extra)));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Alignment(problems.join("; ")))
    }
}

pub struct Scored {
    pub records: Vec<QaRecord>,
    pub warnings: Vec<String>,
}

/// Fills `entropy_score` for every record from its embedding rows.
pub fn score_records(
    mut records: Vec<QaRecord>,
    embeddings: &[EmbeddingRecord],
    kernel: &KernelConfig,
) -> Result<Scored> {
    check_alignment(&records, embeddings.iter().map(|e| e.id.as_str()), "embeddings")?;
    let by_id: HashMap<&str, &EmbeddingRecord> =
        embeddings.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut warnings = Vec::new();
    for rec in &mut records {
        let emb = by_id[rec.id.as_str()];
        let set = EmbeddingSet::new(emb.vectors.clone()).map_err(|e| Error::record(&rec.id, e))?;
        let outcome = score_embeddings(&set, kernel).map_err(|e| Error::record(&rec.id, e))?;
        if outcome.degenerate_sample {
            warnings.push(format!("record {:?}: single sample, entropy set to 0", rec.id));
        }
        rec.entropy_score = Some(outcome.score.value);
    }
    Ok(Scored { records, warnings })
}

pub struct Calibrated {
    pub records: Vec<QaRecord>,
    pub model: CalibrationModel,
    /// Ids of the records the model was fitted on, sorted.
    pub held_out: Vec<String>,
}

/// Seeded held-out split: ids sorted, shuffled, first `ceil(fraction * n)` taken.
pub fn split_held_out(records: &[QaRecord], fraction: f64, seed: u64) -> Result<Vec<String>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1], got {fraction} (empty calibration set)"
        )));
    }
    let mut ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut rng_for(seed));
    let take = ((fraction * ids.len() as f64).ceil() as usize).min(ids.len());
    let mut held: Vec<String> = ids.into_iter().take(take).collect();
    held.sort();
    Ok(held)
}

/// Fits Platt scaling on the held-out split and sets `u_cal` on every record.
pub fn calibrate_records(
    mut records: Vec<QaRecord>,
    settings: &CalibrationSettings,
    seed: u64,
) -> Result<Calibrated> {
    let unscored: Vec<&str> = records
        .iter()
        .filter(|r| r.entropy_score.is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !unscored.is_empty() {
        return Err(Error::Data(format!(
            "entropy_score is null for ids {}",
            list_ids(&unscored)
        )));
    }
    let unlabeled: Vec<&str> = records
        .iter()
        .filter(|r| r.is_incorrect().is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::Data(format!(
            "incorrect is null for ids {}",
            list_ids(&unlabeled)
        )));
    }

    let held_out = split_held_out(&records, settings.split_fraction, seed)?;
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    let (scores, labels): (Vec<f64>, Vec<bool>) = records
        .iter()
        .filter(|r| held.contains(r.id.as_str()))
        .map(|r| (r.entropy_score.unwrap(), r.is_incorrect().unwrap()))
        .unzip();
    let data = CalibrationDataset::from_pairs(&scores, &labels)?;
    let model = fit_platt(&data, &settings.fit)?;
    for rec in &mut records {
        rec.u_cal = Some(model.apply(rec.entropy_score.unwrap()).value());
    }
    Ok(Calibrated {
        records,
        model,
        held_out,
    })
}

/// Metrics of `predictions` against the dataset labels; Spearman is included
/// only when every record carries `u_cal`.
pub fn evaluate_predictions(
    records: &[QaRecord],
    predictions: &[PredictionRecord],
    bins: usize,
) -> Result<MetricsReport> {
    check_alignment(records, predictions.iter().map(|p| p.id.as_str()), "prediction")?;
    let by_id: HashMap<&str, f64> = predictions.iter().map(|p| (p.id.as_str(), p.u)).collect();
    let unlabeled: Vec<&str> = records
        .iter()
        .filter(|r| r.is_incorrect().is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::Data(format!(
            "incorrect is null for ids {}",
            list_ids(&unlabeled)
        )));
    }
    let preds: Vec<f64> = records.iter().map(|r| by_id[r.id.as_str()]).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.is_incorrect().unwrap()).collect();
    let targets: Option<Vec<f64>> = records.iter().map(|r| r.u_cal).collect();
    let batch = EvaluationBatch::new(preds, labels, targets)?;
    Ok(evaluate(&batch, bins)?)
}

/// Per-question targets for the chosen reward: `u_cal` for entropy, the
/// incorrectness label (0 or 1) for Brier.
pub fn training_targets(records: &[QaRecord], kind: RewardKind) -> Result<Vec<QuestionTarget>> {
    let (column, value): (&str, fn(&QaRecord) -> Option<f64>) = match kind {
        RewardKind::Entropy => ("u_cal", |r| r.u_cal),
        RewardKind::Brier => ("incorrect", |r| {
            r.is_incorrect().map(|z| if z { 1.0 } else { 0.0 })
        }),
    };
    let missing: Vec<&str> = records
        .iter()
        .filter(|r| value(r).is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "{} reward needs {column} on every record; null for ids {}",
            kind.as_str(),
            list_ids(&missing)
        )));
    }
    Ok(records
        .iter()
        .map(|r| QuestionTarget {
            id: r.id.clone(),
            target: value(r).unwrap(),
        })
        .collect())
}

/// `E_pi[u]` per question at the sampling temperature.
pub fn policy_predictions(policy: &ToyPolicy, temperature: f64) -> Vec<PredictionRecord> {
    policy
        .question_ids()
        .iter()
        .enumerate()
        .map(|(row, id)| PredictionRecord {
            id: id.clone(),
            u: policy.expected_uncertainty(row, temperature).clamp(0.0, 1.0),
        })
        .collect()
}

pub struct Collected {
    pub records: Vec<QaRecord>,
    pub standard_answers: Vec<GenerationBundle>,
    pub samples: Vec<GenerationBundle>,
    pub embeddings: Vec<EmbeddingRecord>,
    pub warnings: Vec<String>,
}

/// Generates standard answers and entropy samples, embeds the samples and
/// judges the standard answers. Labels already present are kept.
pub fn collect(
    mut records: Vec<QaRecord>,
    provider: &dyn Provider,
    sampling: &SamplingSettings,
) -> Result<Collected> {
    let mut out = Collected {
        records: Vec::new(),
        standard_answers: Vec::with_capacity(records.len()),
        samples: Vec::with_capacity(records.len()),
        embeddings: Vec::with_capacity(records.len()),
        warnings: Vec::new(),
    };
    for rec in &mut records {
        let prompt = answer_prompt(&rec.question);
        let standard = provider
            .generate(&GenerateRequest {
                record_id: &rec.id,
                purpose: Purpose::StandardAnswer,
                prompt: &prompt,
                temperature: sampling.standard_temperature,
                n: 1,
            })
            .map_err(|e| Error::record(&rec.id, e))?;
        let raw = standard.first().cloned().unwrap_or_default();
        rec.standard_answer = match parse_answer(&raw) {
            Ok(p) => p.answer,
            Err(e) => {
                out.warnings
                    .push(format!("record {:?}: {e}; judging the raw output", rec.id));
                raw.trim().to_string()
            }
        };
        out.standard_answers.push(GenerationBundle {
            id: rec.id.clone(),
            temperature: sampling.standard_temperature,
            samples: standard,
        });

        let samples = provider
            .generate(&GenerateRequest {
                record_id: &rec.id,
                purpose: Purpose::EntropySample,
                prompt: &prompt,
                temperature: sampling.entropy_temperature,
                n: sampling.samples_per_question,
            })
            .map_err(|e| Error::record(&rec.id, e))?;
        let emb = provider
            .embed(&rec.id, &samples)
            .map_err(|e| Error::record(&rec.id, e))?;
        out.embeddings.push(EmbeddingRecord {
            id: rec.id.clone(),
            embed_model_tag: emb.model_tag,
            vectors: emb.vectors,
        });
        out.samples.push(GenerationBundle {
            id: rec.id.clone(),
            temperature: sampling.entropy_temperature,
            samples,
        });

        if rec.incorrect.is_none() {
            let verdict = provider
                .judge(&rec.id, &rec.question, &rec.gold_answer, &rec.standard_answer)
                .map_err(|e| Error::record(&rec.id, e))?;
            match parse_judgment(&verdict) {
                Ok(j) => rec.incorrect = Some(j.incorrect_label()),
                Err(e) => out
                    .warnings
                    .push(format!("record {:?}: {e}; left unlabeled", rec.id)),
            }
        }
    }
    out.records = records;
    Ok(out)
}
