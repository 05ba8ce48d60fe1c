//! Fits Platt scaling to synthetic data drawn from a known logistic model
//! and maps a few scores to calibrated error probabilities.

use entcal::calibration::{fit_platt, nll, synthetic_logistic, CalibrationModel, FitConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a, b) = (3.0, -1.5);
    let data = synthetic_logistic(5000, a, b, 42);
    let model = fit_platt(&data, &FitConfig::default())?;
    let meta = model.fit_meta.expect("fit records metadata");
    println!(
        "fitted A = {:.4}, B = {:.4} (truth {a}, {b}) in {} iterations",
        model.slope_a, model.intercept_b, meta.iterations
    );
    println!(
        "NLL fitted = {:.3}, NLL at truth = {:.3}",
        meta.final_nll,
        nll(&CalibrationModel::new(a, b), &data)
    );
    for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("  S = {s:.2} -> u_cal = {:.4}", model.apply(s).value());
    }

    let smoothed = fit_platt(
        &data,
        &FitConfig {
            label_smoothing: true,
            ..FitConfig::default()
        },
    )?;
    println!(
        "with label smoothing: A = {:.4}, B = {:.4}",
        smoothed.slope_a, smoothed.intercept_b
    );
    Ok(())
}
