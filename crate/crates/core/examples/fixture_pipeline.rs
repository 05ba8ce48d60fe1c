//! Runs the full offline pipeline on the shipped demo fixture.
//!
//! ```text
//! cargo run --release --example fixture_pipeline [out_dir]
//! ```

use std::path::{Path, PathBuf};

use entcal::pipeline::{cmd_pipeline, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/config.json");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("entcal-demo-runs"));
    let config = RunConfig::from_file(&fixture)?;
    let outcome = cmd_pipeline(&config, &out)?;

    println!("run directory: {}", outcome.run_dir.display());
    for stage in &outcome.manifest.stages {
        println!(
            "  {:<10} {:?} {:>8.3}s  {} outputs",
            stage.name,
            stage.status,
            stage.elapsed_secs,
            stage.outputs.len()
        );
    }
    if let Some(m) = &outcome.manifest.metrics {
        print!("{}", m.to_table());
    }
    Ok(())
}
