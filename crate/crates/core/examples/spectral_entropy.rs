//! Entropy of a few embedding sets: agreeing samples score near 0, spread-out
//! samples approach `ln N`.

use entcal::entropy::{
    build_kernel, normalize_to_density, score_embeddings, spectrum, EmbeddingSet, KernelConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sets = [
        ("all samples agree", vec![vec![1.0, 0.0, 0.0]; 4]),
        (
            "two answers",
            vec![
                vec![1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0],
            ],
        ),
        (
            "four answers",
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![-1.0, 0.0, 0.0],
            ],
        ),
    ];

    for kernel in [KernelConfig::default(), KernelConfig::Linear] {
        println!("kernel: {}", serde_json::to_string(&kernel)?);
        for (name, rows) in &sets {
            let emb = EmbeddingSet::new(rows.clone())?;
            let h = score_embeddings(&emb, &kernel)?.score.value;
            let density = normalize_to_density(&build_kernel(&emb, &kernel)?)?;
            let lambdas: Vec<String> = spectrum(&density)?
                .eigenvalues()
                .iter()
                .map(|l| format!("{l:.3}"))
                .collect();
            println!(
                "  {name:<18} H = {h:.4}  (ln N = {:.4})  spectrum [{}]",
                (rows.len() as f64).ln(),
                lambdas.join(", ")
            );
        }
    }
    Ok(())
}
