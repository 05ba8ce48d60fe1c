//! Talks to an OpenAI-compatible server: one standard answer, K samples,
//! their embeddings and a judgment, then the entropy score.
//!
//! ```text
//! ENTCAL_ENDPOINT=http://localhost:8000/v1 OPENAI_API_KEY=... \
//!     cargo run --example live_provider -- "What is the capital of France?" Paris
//! ```

use entcal::data::parse::{parse_answer, parse_judgment};
use entcal::data::prompts::answer_prompt;
use entcal::data::provider::{
    connect, GenerateRequest, ProviderConfig, ProviderMode, Purpose,
};
use entcal::entropy::{score_embeddings, EmbeddingSet, KernelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let Ok(endpoint) = std::env::var("ENTCAL_ENDPOINT") else {
        eprintln!("set ENTCAL_ENDPOINT to an OpenAI-compatible base URL");
        return Ok(());
    };
    let mut args = std::env::args().skip(1);
    let question = args.next().unwrap_or_else(|| "What is the capital of France?".into());
    let gold = args.next().unwrap_or_else(|| "Paris".into());

    let config = ProviderConfig {
        mode: ProviderMode::Live,
        endpoint: Some(endpoint),
        ..ProviderConfig::default()
    };
    let provider = connect(&config)?;
    let prompt = answer_prompt(&question);

    let standard = provider.generate(&GenerateRequest {
        record_id: "demo",
        purpose: Purpose::StandardAnswer,
        prompt: &prompt,
        temperature: 0.1,
        n: 1,
    })?;
    let answer = parse_answer(&standard[0]).map(|p| p.answer).unwrap_or_default();
    let verdict = parse_judgment(&provider.judge("demo", &question, &gold, &answer)?);
    println!("standard answer: {answer:?}, judged {verdict:?}");

    let samples = provider.generate(&GenerateRequest {
        record_id: "demo",
        purpose: Purpose::EntropySample,
        prompt: &prompt,
        temperature: 1.0,
        n: 10,
    })?;
    let emb = provider.embed("demo", &samples)?;
    let score = score_embeddings(&EmbeddingSet::new(emb.vectors)?, &KernelConfig::default())?;
    println!("entropy over {} samples: {:.4}", samples.len(), score.score.value);
    Ok(())
}
