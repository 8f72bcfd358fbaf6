use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lottery_lens::harness::{self, ExperimentConfig, StageOutcome};

/// Prune a small residual CNN lottery-ticket style and measure what happens
/// to its saliency maps and concepts.
#[derive(Debug, Parser)]
#[command(name = "lottery-lens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Global seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the dense network.
    Train,
    /// Prune, rewind and fine-tune at every scheduled sparsity.
    Prune,
    /// Compute saliency maps for the evaluation subset.
    Attribute,
    /// Gini, ROAD curves and AOPC; writes the metric CSVs.
    Evaluate,
    /// Extract and rank concepts.
    Concepts,
    /// Render SVG plots and summary.json from the CSVs.
    Report,
    /// Run every stage in order.
    RunAll,
    /// Print the effective config as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(stage: &str, outcome: StageOutcome) {
    match outcome {
        StageOutcome::Ran => println!("{stage}: done"),
        StageOutcome::Skipped => println!("{stage}: up to date"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let start = Instant::now();
    match cli.command {
        Command::Train => report("train", harness::cmd_train(&cfg)?),
        Command::Prune => report("prune", harness::cmd_prune(&cfg)?),
        Command::Attribute => report("attribute", harness::cmd_attribute(&cfg)?),
        Command::Evaluate => report("evaluate", harness::cmd_evaluate(&cfg)?),
        Command::Concepts => report("concepts", harness::cmd_concepts(&cfg)?),
        Command::Report => report("report", harness::cmd_report(&cfg)?),
        Command::RunAll => {
            let bundle = harness::cmd_run_all(&cfg)?;
            for (level, measured, acc) in &bundle.accuracy {
                println!("sparsity {level:.2} (measured {measured:.4}): accuracy {acc:.4}");
            }
            println!("results in {}", cfg.out_dir.display());
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
    }
    log::info!("finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
