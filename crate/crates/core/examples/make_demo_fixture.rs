//! Regenerates `fixtures/demo`, the offline fixture used by the pipeline
//! example and tests.
//!
//! Each question is an addition problem with a hidden difficulty `p`. The
//! standard answer is wrong with probability `p`, and each of the K sampled
//! answers is wrong with probability `p`, drawn from a few distractors. A
//! sample's embedding is a fixed unit direction per distinct answer text, so
//! identical answers embed identically and harder questions spread out.
//!
//! ```text
//! cargo run --example make_demo_fixture [out_dir]
//! ```

use std::path::PathBuf;

use rand::Rng;

use entcal::data::dataset::{save_dataset, write_jsonl, EmbeddingRecord, GenerationBundle, QaRecord};
use entcal::seed::{derive_seed, rng_for};

const QUESTIONS: usize = 150;
const K: usize = 10;
const DIM: usize = 8;
const SEED: u64 = 2024;

fn direction(label: &str) -> Vec<f64> {
    let mut rng = rng_for(derive_seed(SEED, label));
    let v: Vec<f64> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn answer_text(answer: i64) -> String {
    format!("R: Add the two numbers.\nA: {answer}")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo"));
    std::fs::create_dir_all(&out)?;
    let mut rng = rng_for(SEED);

    let mut dataset = Vec::new();
    let mut standard = Vec::new();
    let mut samples = Vec::new();
    let mut embeddings = Vec::new();
    for i in 0..QUESTIONS {
        let id = format!("q{:03}", i + 1);
        let a: i64 = rng.random_range(10..100);
        let b: i64 = rng.random_range(10..100);
        let gold = a + b;
        let p: f64 = rng.random_range(0.0..0.9);
        let distractors = [gold - 10, gold + 1, gold - 1, gold + 10];
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            if rng.random_bool(p) {
                distractors[rng.random_range(0..distractors.len())]
            } else {
                gold
            }
        };

        dataset.push(QaRecord::new(&id, format!("What is {a} + {b}?"), gold.to_string()));
        standard.push(GenerationBundle {
            id: id.clone(),
            temperature: 0.1,
            samples: vec![answer_text(draw(&mut rng))],
        });

        let answers: Vec<i64> = (0..K).map(|_| draw(&mut rng)).collect();
        let vectors = answers
            .iter()
            .map(|ans| direction(&format!("{id}/{ans}")))
            .collect();
        samples.push(GenerationBundle {
            id: id.clone(),
            temperature: 1.0,
            samples: answers.iter().map(|&x| answer_text(x)).collect(),
        });
        embeddings.push(EmbeddingRecord {
            id,
            embed_model_tag: "demo-answer-directions-d8".into(),
            vectors,
        });
    }

    save_dataset(&out.join("dataset.jsonl"), &dataset)?;
    write_jsonl(&out.join("standard_answers.jsonl"), &standard)?;
    write_jsonl(&out.join("samples.jsonl"), &samples)?;
    write_jsonl(&out.join("embeddings.jsonl"), &embeddings)?;
    println!("wrote {QUESTIONS} questions to {}", out.display());
    Ok(())
}
