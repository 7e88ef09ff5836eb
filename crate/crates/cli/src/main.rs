//! `mpt-classify`: config-driven front end for building signature
//! dictionaries, training and scoring the classifiers, and running the
//! sweep and leave-one-geometry-out studies. All randomness flows from one
//! seed, so any run can be reproduced byte for byte.

mod commands;
mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use commands::OutputDir;
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mpt-classify",
    about = "Metal detection classification experiments on tensor spectral signatures",
    version
)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate dictionaries and export them as CSV plus sidecar metadata.
    Build,
    /// Train every configured method on one split and save the models.
    Train,
    /// Score every configured method: confusion matrices, metrics, posteriors.
    Evaluate,
    /// Kappa-versus-P table across methods via Monte Carlo cross validation.
    Compare,
    /// Full-factorial sweep over frequency count, SNR, and hyperparameters.
    Sweep,
    /// Leave-one-geometry-out study with posterior summaries.
    Loo,
    /// Verify the noise model produces the requested signal-to-noise ratios.
    NoiseCheck,
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_deref()
        .context("--config <path> is required")?;
    let (cfg, raw) = ExperimentConfig::load(config_path)?;

    let seed = match cli.seed.or(cfg.seed) {
        Some(s) => s,
        None => bail!("no seed: set `seed` in the config or pass --seed"),
    };
    let out_root = match cli.out.clone().or_else(|| cfg.out_dir.clone()) {
        Some(p) => p,
        None => bail!("no output directory: set `out_dir` in the config or pass --out"),
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure thread pool")?;
    }

    let mut out = OutputDir::create(&out_root)?;
    match cli.command {
        Command::Build => commands::cmd_build(&cfg, seed, &mut out)?,
        Command::Train => commands::cmd_train(&cfg, seed, &mut out)?,
        Command::Evaluate => commands::cmd_evaluate(&cfg, seed, &mut out)?,
        Command::Compare => commands::cmd_compare(&cfg, seed, &mut out)?,
        Command::Sweep => commands::cmd_sweep(&cfg, seed, &mut out)?,
        Command::Loo => commands::cmd_loo(&cfg, seed, &mut out)?,
        Command::NoiseCheck => commands::cmd_noise_check(&cfg, seed, &mut out)?,
    }
    out.write_manifest(&raw)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
