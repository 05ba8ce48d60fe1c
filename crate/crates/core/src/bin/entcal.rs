use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use entcal::data::provider::ProviderMode;
use entcal::pipeline::{self, RunConfig, RunOutcome};
use entcal::rewards::RewardKind;

#[derive(Parser)]
#[command(name = "entcal", version, about = "Entropy-calibrated uncertainty rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill entropy_score from an embeddings file
    Score(Common),
    /// Fit Platt scaling on a held-out split and fill u_cal
    Calibrate(Common),
    /// ECE, AUROC and Spearman of a predictions file
    Evaluate(Common),
    /// Train the toy GRPO policy against the reward
    TrainSim(Common),
    /// collect, score, calibrate, train-sim, evaluate
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for numbered run directories
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, value_parser = ["fixture", "live"])]
    provider: Option<String>,
    #[arg(long, value_parser = ["entropy", "brier"])]
    reward: Option<String>,
    /// Reliability bins for ECE
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Fixture directory for --provider fixture
    #[arg(long)]
    fixture_dir: Option<PathBuf>,
    /// Override trainer steps
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn resolve(&self) -> entcal::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.provider {
            cfg.provider.mode = p.parse::<ProviderMode>().map_err(entcal::Error::Config)?;
        }
        if let Some(r) = &self.reward {
            cfg.reward = r.parse::<RewardKind>().map_err(entcal::Error::Config)?;
        }
        if let Some(b) = self.bins {
            cfg.metrics.bins = b;
        }
        if let Some(s) = self.steps {
            cfg.trainer.steps = s;
        }
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut cfg.paths.dataset, &self.dataset);
        set(&mut cfg.paths.embeddings, &self.embeddings);
        set(&mut cfg.paths.predictions, &self.predictions);
        set(&mut cfg.provider.fixture_dir, &self.fixture_dir);
        Ok(cfg)
    }
}

fn report(outcome: &RunOutcome) {
    let m = &outcome.manifest;
    println!("run: {}", outcome.run_dir.display());
    if let Some(c) = &m.calibration {
        println!("calibration: A={:.6} B={:.6}", c.slope_a, c.intercept_b);
    }
    if let Some(t) = &m.training {
        println!(
            "training: steps={} mean|gap|={:.4} expected reward={:.4} ({:.2}s)",
            t.steps, t.final_mean_abs_gap, t.final_expected_reward, t.wall_clock_secs
        );
    }
    if let Some(metrics) = &m.metrics {
        print!("{}", metrics.to_table());
    }
    if !m.warnings.is_empty() {
        println!("warnings: {}", m.warnings.len());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig, &std::path::Path) -> entcal::Result<RunOutcome>) =
        match &cli.command {
            Command::Score(c) => (c, pipeline::cmd_score),
            Command::Calibrate(c) => (c, pipeline::cmd_calibrate),
            Command::Evaluate(c) => (c, pipeline::cmd_evaluate),
            Command::TrainSim(c) => (c, pipeline::cmd_train_sim),
            Command::Pipeline(c) => (c, pipeline::cmd_pipeline),
        };
    match common.resolve().and_then(|cfg| run(&cfg, &common.out)) {
        Ok(outcome) => {
            report(&outcome);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
