//! Trains the toy policy on 50 questions with random calibrated targets and
//! prints the learning curve.
//!
//! ```text
//! cargo run --release --example grpo_toy_training [steps] [seed]
//! ```

use rand::Rng;

use entcal::grpo::{train, QuestionTarget, TrainerConfig};
use entcal::rewards::RewardKind;
use entcal::seed::rng_for;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let mut rng = rng_for(seed);
    let targets: Vec<QuestionTarget> = (0..50)
        .map(|i| QuestionTarget {
            id: format!("q{i:02}"),
            target: rng.random(),
        })
        .collect();
    let config = TrainerConfig {
        steps,
        seed,
        ..TrainerConfig::default()
    };
    let (_, report) = train(&targets, RewardKind::Entropy, &config)?;

    println!("step  mean_reward  mean|E[u]-u_cal|");
    let stride = (steps / 10).max(1);
    for (i, (r, g)) in report
        .mean_reward_curve
        .iter()
        .zip(&report.mean_abs_gap_curve)
        .enumerate()
        .filter(|(i, _)| (i + 1) % stride == 0)
    {
        println!("{:>4}  {r:>11.4}  {g:>16.4}", i + 1);
    }
    println!(
        "final: expected reward {:.4}, mean gap {:.4}, {:.2}s",
        report.final_expected_reward, report.final_mean_abs_gap, report.wall_clock_secs
    );
    for q in report.questions.iter().take(5) {
        println!("  {}: u_cal {:.3}  E[u] {:.3}", q.id, q.target, q.expected_u);
    }
    Ok(())
}
