use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use inducement_cli::config::{ModeName, RunConfig, Table};
use inducement_cli::commands;

#[derive(Parser)]
#[command(name = "inducement", version, about = "Sensitivity analysis of causal risk ratios under unmeasured confounding")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Posterior draws used in per-draw projection.
    #[arg(long, global = true)]
    draws: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeName>,
    /// Reduced-form artifact to write or read.
    #[arg(long, global = true)]
    artifact: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the reduced-form model and write the artifact.
    Fit {
        /// Input CSV; overrides `data.path`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Project the artifact through every density of the sweep.
    Project,
    /// Compare E-values with the projected risk ratios.
    Evalue,
    /// Run a simulation study.
    Simulate {
        #[arg(long, value_enum)]
        table: Option<Table>,
    },
    /// Fit summary trees and subgroup-difference posteriors.
    Subgroup,
    /// Effective sample sizes and Geweke diagnostics of the artifact's chains.
    Diagnose,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.sensitivity.threads = t;
    }
    if let Some(d) = cli.output_dir {
        cfg.output_dir = d;
    }
    if let Some(d) = cli.draws {
        cfg.draws = d;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(a) = cli.artifact {
        cfg.artifact = Some(a);
    }
    if let Command::Fit { data: Some(path) } = &cli.command {
        match cfg.data.as_mut() {
            Some(d) => d.path = path.clone(),
            None => anyhow::bail!("--data needs a [data] section naming the treatment and outcome columns"),
        }
    }
    cfg.validate()?;
    match cli.command {
        Command::Fit { .. } => commands::fit(&cfg),
        Command::Project => commands::project(&cfg),
        Command::Evalue => commands::evalue(&cfg),
        Command::Simulate { table } => commands::simulate(&cfg, table.unwrap_or(cfg.simulate.table)),
        Command::Subgroup => commands::subgroup(&cfg),
        Command::Diagnose => commands::diagnose(&cfg, cfg.sensitivity.threads),
    }
}
