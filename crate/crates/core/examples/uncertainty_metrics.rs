//! ECE, AUROC and Spearman for three predictors on the same labels.

use entcal::metrics::{evaluate, EvaluationBatch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = vec![false, false, false, true, false, true, true, true];
    let targets = vec![0.1, 0.2, 0.3, 0.6, 0.4, 0.7, 0.8, 0.9];
    let predictors = [
        ("perfect", labels.iter().map(|&z| if z { 1.0 } else { 0.0 }).collect()),
        ("tracks targets", targets.clone()),
        ("constant 0.5", vec![0.5; labels.len()]),
    ];
    for (name, preds) in predictors {
        let batch = EvaluationBatch::new(preds, labels.clone(), Some(targets.clone()))?;
        let report = evaluate(&batch, 10)?;
        println!("== {name}");
        print!("{}", report.to_table());
    }
    Ok(())
}
