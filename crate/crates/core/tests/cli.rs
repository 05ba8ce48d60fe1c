use std::path::{Path, PathBuf};
use std::process::Command;

use rand::Rng;
use serde_json::Value;

use entcal::calibration::{fit_platt, nll, CalibrationDataset, CalibrationModel, FitConfig};
use entcal::data::dataset::{
    load_dataset, read_jsonl, save_dataset, write_jsonl, EmbeddingRecord, PredictionRecord, QaRecord,
};
use entcal::entropy::{score_embeddings, EmbeddingSet, KernelConfig};
use entcal::metrics::{evaluate, EvaluationBatch};
use entcal::pipeline::{
    cmd_calibrate, cmd_evaluate, cmd_score, cmd_train_sim, RunConfig, StageStatus, DATASET_FILE,
    MANIFEST_FILE,
};
use entcal::rewards::RewardKind;
use entcal::seed::rng_for;
use entcal::Error;

fn entcal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entcal"))
}

fn manifest(run_dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(run_dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn random_embeddings(id: &str, k: usize, seed: u64) -> EmbeddingRecord {
    let mut rng = rng_for(seed);
    EmbeddingRecord {
        id: id.into(),
        embed_model_tag: "test".into(),
        vectors: (0..k)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
    }
}

struct ScoreInputs {
    _dir: tempfile::TempDir,
    dataset: PathBuf,
    embeddings: PathBuf,
    out: PathBuf,
}

fn score_inputs(records: &[QaRecord], emb: &[EmbeddingRecord]) -> ScoreInputs {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("dataset.jsonl");
    let embeddings = dir.path().join("embeddings.jsonl");
    save_dataset(&dataset, records).unwrap();
    write_jsonl(&embeddings, emb).unwrap();
    let out = dir.path().join("runs");
    ScoreInputs {
        _dir: dir,
        dataset,
        embeddings,
        out,
    }
}

fn three_questions() -> (Vec<QaRecord>, Vec<EmbeddingRecord>) {
    let records = (1..=3).map(|i| QaRecord::new(format!("q{i}"), "Q?", "A")).collect();
    let emb = (1..=3)
        .map(|i| random_embeddings(&format!("q{i}"), 5, i))
        .collect();
    (records, emb)
}

#[test]
fn score_matches_direct_computation() {
    let (records, emb) = three_questions();
    let inp = score_inputs(&records, &emb);
    let status = entcal()
        .args(["score", "--seed", "3", "--dataset"])
        .arg(&inp.dataset)
        .arg("--embeddings")
        .arg(&inp.embeddings)
        .arg("--out")
        .arg(&inp.out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let run = inp.out.join("run-0001");
    let scored = load_dataset(&run.join(DATASET_FILE)).unwrap();
    for (r, e) in scored.iter().zip(&emb) {
        let direct = score_embeddings(&EmbeddingSet::new(e.vectors.clone()).unwrap(), &KernelConfig::default())
            .unwrap()
            .score
            .value;
        assert_eq!(r.entropy_score, Some(direct), "{}", r.id);
    }
    let m = manifest(&run);
    assert_eq!(m["command"], "score");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert!(m["failed_stage"].is_null());
}

#[test]
fn empty_dataset_scores_to_empty_output() {
    let inp = score_inputs(&[], &[]);
    let out = entcal()
        .arg("score")
        .arg("--dataset")
        .arg(&inp.dataset)
        .arg("--embeddings")
        .arg(&inp.embeddings)
        .arg("--out")
        .arg(&inp.out)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let written = std::fs::read(inp.out.join("run-0001").join(DATASET_FILE)).unwrap();
    assert!(written.is_empty());
}

#[test]
fn missing_embedding_is_an_alignment_error_naming_the_id() {
    let (records, mut emb) = three_questions();
    emb.remove(1);
    let inp = score_inputs(&records, &emb);
    let out = entcal()
        .arg("score")
        .arg("--dataset")
        .arg(&inp.dataset)
        .arg("--embeddings")
        .arg(&inp.embeddings)
        .arg("--out")
        .arg(&inp.out)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("q2"), "{stderr}");
    let m = manifest(&inp.out.join("run-0001"));
    assert_eq!(m["failed_stage"], "score");
}

#[test]
fn corrupt_embeddings_line_fails_with_line_number() {
    let (records, emb) = three_questions();
    let inp = score_inputs(&records, &emb);
    let mut text = std::fs::read_to_string(&inp.embeddings).unwrap();
    text = text.replacen("{\"id\":\"q2\"", "{\"id\":\"q2\",,", 1);
    std::fs::write(&inp.embeddings, text).unwrap();
    let mut cfg = RunConfig::default();
    cfg.paths.dataset = Some(inp.dataset.clone());
    cfg.paths.embeddings = Some(inp.embeddings.clone());
    let err = cmd_score(&cfg, &inp.out).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("embeddings.jsonl:2:"), "{err}");
    let m = manifest(&inp.out.join("run-0001"));
    assert_eq!(m["failed_stage"], "score");
    assert_eq!(m["stages"][0]["status"], serde_json::to_value(StageStatus::Failed).unwrap());
}

#[test]
fn zero_split_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, r#"{"calibration": {"split_fraction": 0}, "paths": {"dataset": "d.jsonl"}}"#).unwrap();
    let out = entcal()
        .arg("calibrate")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split_fraction"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, r#"{"bins": 5}"#).unwrap();
    let out = entcal()
        .args(["evaluate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn labeled_scored(n: usize, seed: u64) -> Vec<QaRecord> {
    let mut rng = rng_for(seed);
    (0..n)
        .map(|i| {
            let s: f64 = rng.random_range(0.0..2.0);
            let p = 1.0 / (1.0 + (-(3.0 * s - 3.0)).exp());
            let mut r = QaRecord::new(format!("r{i:04}"), "q", "a");
            r.entropy_score = Some(s);
            r.incorrect = Some(rng.random_bool(p) as u8);
            r
        })
        .collect()
}

#[test]
fn calibrate_is_deterministic_and_fits_well() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    let records = labeled_scored(1000, 5);
    save_dataset(&dataset, &records).unwrap();
    let mut cfg = RunConfig::default();
    cfg.seed = 17;
    cfg.calibration.split_fraction = 1.0;
    cfg.paths.dataset = Some(dataset);
    let a = cmd_calibrate(&cfg, dir.path()).unwrap();
    let b = cmd_calibrate(&cfg, dir.path()).unwrap();
    assert_ne!(a.run_dir, b.run_dir);
    for f in [DATASET_FILE, "calibration.json"] {
        assert_eq!(
            std::fs::read(a.run_dir.join(f)).unwrap(),
            std::fs::read(b.run_dir.join(f)).unwrap()
        );
    }
    // with the whole set held out, the fit is the plain maximum-likelihood fit
    let model = a.manifest.calibration.unwrap();
    let data = CalibrationDataset::from_pairs(
        &records.iter().map(|r| r.entropy_score.unwrap()).collect::<Vec<_>>(),
        &records.iter().map(|r| r.incorrect == Some(1)).collect::<Vec<_>>(),
    )
    .unwrap();
    let direct = fit_platt(&data, &FitConfig::default()).unwrap();
    assert_eq!(model.slope_a, direct.slope_a);
    let truth = nll(&CalibrationModel::new(3.0, -3.0), &data);
    assert!(nll(&model, &data) <= truth + 1e-3 * data.len() as f64);
    assert!(model.slope_a > 0.0);

    let out = load_dataset(&a.run_dir.join(DATASET_FILE)).unwrap();
    for r in &out {
        let u = r.u_cal.unwrap();
        assert!((0.0..=1.0).contains(&u));
    }
}

#[test]
fn evaluate_matches_direct_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_for(8);
    let mut records = labeled_scored(200, 9);
    let mut preds = Vec::new();
    for r in &mut records {
        r.u_cal = Some(rng.random());
        preds.push(PredictionRecord {
            id: r.id.clone(),
            u: rng.random(),
        });
    }
    preds.reverse();
    let dataset = dir.path().join("d.jsonl");
    let predictions = dir.path().join("p.jsonl");
    save_dataset(&dataset, &records).unwrap();
    write_jsonl(&predictions, &preds).unwrap();
    let out = entcal()
        .args(["evaluate", "--bins", "15", "--dataset"])
        .arg(&dataset)
        .arg("--predictions")
        .arg(&predictions)
        .arg("--out")
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ece") && stdout.contains("auroc") && stdout.contains("spearman"), "{stdout}");

    let run = dir.path().join("runs/run-0001");
    let reported: entcal::metrics::MetricsReport =
        serde_json::from_slice(&std::fs::read(run.join("metrics.json")).unwrap()).unwrap();
    preds.reverse();
    let batch = EvaluationBatch::new(
        preds.iter().map(|p| p.u).collect(),
        records.iter().map(|r| r.incorrect == Some(1)).collect(),
        Some(records.iter().map(|r| r.u_cal.unwrap()).collect()),
    )
    .unwrap();
    assert_eq!(reported, evaluate(&batch, 15).unwrap());
}

#[test]
fn evaluate_with_unknown_prediction_id_fails() {
    let dir = tempfile::tempdir().unwrap();
    let records = labeled_scored(5, 1);
    let mut preds: Vec<PredictionRecord> = records
        .iter()
        .map(|r| PredictionRecord {
            id: r.id.clone(),
            u: 0.5,
        })
        .collect();
    preds.push(PredictionRecord {
        id: "ghost".into(),
        u: 0.5,
    });
    let mut cfg = RunConfig::default();
    cfg.paths.dataset = Some(dir.path().join("d.jsonl"));
    cfg.paths.predictions = Some(dir.path().join("p.jsonl"));
    save_dataset(cfg.paths.dataset.as_ref().unwrap(), &records).unwrap();
    write_jsonl(cfg.paths.predictions.as_ref().unwrap(), &preds).unwrap();
    let err = cmd_evaluate(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Alignment(_)));
    assert!(err.to_string().contains("ghost"));
}

#[test]
fn train_sim_with_zero_steps_reports_initial_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = labeled_scored(4, 2);
    for (i, r) in records.iter_mut().enumerate() {
        r.u_cal = Some(i as f64 / 4.0);
    }
    let mut cfg = RunConfig::default();
    cfg.trainer.steps = 0;
    cfg.paths.dataset = Some(dir.path().join("d.jsonl"));
    save_dataset(cfg.paths.dataset.as_ref().unwrap(), &records).unwrap();
    let outcome = cmd_train_sim(&cfg, dir.path()).unwrap();
    let preds: Vec<PredictionRecord> = read_jsonl(&outcome.run_dir.join("predictions.jsonl")).unwrap();
    assert_eq!(preds.len(), 4);
    for p in &preds {
        assert!((p.u - 0.5).abs() < 1e-12, "uniform policy mean is 0.5, got {}", p.u);
    }
    let curve = std::fs::read_to_string(outcome.run_dir.join("reward_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1);
}

#[test]
fn brier_without_labels_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = labeled_scored(3, 3);
    records[1].incorrect = None;
    let mut cfg = RunConfig::default();
    cfg.reward = RewardKind::Brier;
    cfg.paths.dataset = Some(dir.path().join("d.jsonl"));
    save_dataset(cfg.paths.dataset.as_ref().unwrap(), &records).unwrap();
    let err = cmd_train_sim(&cfg, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn input_digests_track_content() {
    let (records, emb) = three_questions();
    let inp = score_inputs(&records, &emb);
    let mut cfg = RunConfig::default();
    cfg.paths.dataset = Some(inp.dataset.clone());
    cfg.paths.embeddings = Some(inp.embeddings.clone());
    let digest = |m: &entcal::pipeline::RunManifest| -> Vec<String> {
        m.inputs.iter().map(|d| d.sha256.clone()).collect()
    };
    let a = digest(&cmd_score(&cfg, &inp.out).unwrap().manifest);
    let b = digest(&cmd_score(&cfg, &inp.out).unwrap().manifest);
    assert_eq!(a, b);
    let mut changed = records.clone();
    changed[0].question = "Q!".into();
    save_dataset(&inp.dataset, &changed).unwrap();
    let c = digest(&cmd_score(&cfg, &inp.out).unwrap().manifest);
    assert_ne!(a[0], c[0]);
    assert_eq!(a[1], c[1]);
    assert!(inp.out.join("run-0003").is_dir());
}

#[test]
fn help_lists_subcommands() {
    let out = entcal().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["score", "calibrate", "evaluate", "train-sim", "pipeline"] {
        assert!(text.contains(sub), "{text}");
    }
}

#[test]
fn pipeline_on_demo_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/config.json");
    let out = entcal()
        .args(["pipeline", "--steps", "50", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run-0001");
    for stage in ["collect", "score", "calibrate", "train-sim", "evaluate"] {
        assert!(run.join(stage).is_dir(), "{stage}");
    }
    let m = manifest(&run);
    assert_eq!(m["stages"].as_array().unwrap().len(), 5);
    assert_eq!(m["config"]["trainer"]["steps"], 50);
}
