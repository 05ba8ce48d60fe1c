//! Entropy and Brier rewards as a function of the predicted uncertainty.

use entcal::rewards::{brier_reward_value, entropy_reward_value};

fn main() {
    let u_cal = 0.3;
    println!("u_theta  entropy(u_cal={u_cal})  brier(correct)  brier(incorrect)");
    for i in 0..=20 {
        let u = i as f64 / 20.0;
        println!(
            "{u:>7.2}  {:>20.4}  {:>14.4}  {:>16.4}",
            entropy_reward_value(u, u_cal),
            brier_reward_value(u, false),
            brier_reward_value(u, true)
        );
    }
}
