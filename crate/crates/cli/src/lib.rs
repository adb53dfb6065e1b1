//! Command-line driver: configuration, dataset formats and pipelines.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pmtrap_core::reproduce::ReproduceOptions;

use crate::commands::AnalyzeOptions;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pmtrap", version, about = "Trapped-emitter simulation and analysis")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Root directory for outputs when --out is not given.
    #[arg(long, global = true, env = "PMTRAP_OUT", default_value = "pmtrap-out")]
    pub out_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset: time tags, detector signal, aperture image.
    Simulate(SimulateArgs),
    /// Verify a dataset and write results.json plus CSV tables.
    Analyze(AnalyzeArgs),
    /// Run a self-contained synthetic campaign.
    Reproduce(ReproduceArgs),
    /// Check a configuration file.
    ValidateConfig(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Configuration file; defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset directory written by `simulate`.
    pub dataset: PathBuf,
    /// Results directory; defaults to the dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pulse lags averaged for the g² side peaks.
    #[arg(long)]
    pub max_lag: Option<i64>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Campaign id, or `all`.
    #[arg(long, default_value = "all")]
    pub figure: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Shorter campaigns: fewer pulses, one spectrum per cluster size.
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Print the configuration with every default filled in.
    #[arg(long)]
    pub print: bool,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn quick_reproduce_options(seed: u64) -> ReproduceOptions {
    ReproduceOptions {
        seed,
        rate_pulses: 1_000_000,
        repeats: 1,
        g2_duration: 0.3,
        ..ReproduceOptions::default()
    }
}

/// Execute a parsed command line; returns the lines to print.
pub fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second initialisation within one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = load_config(a.config.as_deref())?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let out = a
                .out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| cli.out_root.join(format!("seed-{}", cfg.seed)));
            let m = commands::simulate(&cfg, &out)?;
            let mut lines = vec![format!("dataset {}", out.display())];
            lines.extend(m.artifacts.iter().map(|a| format!("  {}  {}  {} bytes", a.sha256, a.file, a.bytes)));
            Ok(lines)
        }
        Command::Analyze(a) => {
            let r = commands::analyze(
                &a.dataset,
                &AnalyzeOptions {
                    max_lag: a.max_lag,
                    out: a.out.clone(),
                },
            )?;
            let dir = a.out.unwrap_or(a.dataset);
            let mut lines = vec![format!("results {}", dir.join(commands::RESULTS).display())];
            if let Some(d) = &r.damping {
                lines.push(format!("  gamma/2pi {:.4e} Hz", d.gamma_over_2pi_hz));
            }
            if let Some(g) = &r.g2 {
                lines.push(format!("  g2(0) {:.4} ± {:.4}", g.g2_zero, g.error));
            }
            if let Some(b) = &r.blinking {
                lines.push(format!("  blinking {:?}", b.classification));
            }
            if let Some(d) = &r.dipole {
                lines.push(format!("  a_pi {:.4} ± {:.4}", d.fit.a_pi, d.fit.a_pi_stderr));
            }
            if !r.errors.is_empty() {
                let failed: Vec<String> = r.errors.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                return Err(CliError::Run(format!("analysis failed ({})", failed.join("; "))));
            }
            Ok(lines)
        }
        Command::Reproduce(a) => {
            let figures = commands::parse_figures(&a.figure)?;
            let opts = if a.quick {
                quick_reproduce_options(a.seed)
            } else {
                ReproduceOptions {
                    seed: a.seed,
                    ..ReproduceOptions::default()
                }
            };
            let out = a.out.unwrap_or_else(|| cli.out_root.join("reproduce"));
            let campaigns = commands::reproduce_figures(&figures, &opts, &out)?;
            Ok(campaigns
                .iter()
                .map(|c| format!("{}  {}", c.figure, c.summary))
                .collect())
        }
        Command::ValidateConfig(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            if a.print {
                Ok(vec![cfg.to_toml()])
            } else {
                Ok(vec![format!("ok {}", cfg.hash())])
            }
        }
    }
}
