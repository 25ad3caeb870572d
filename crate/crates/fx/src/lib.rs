//! `fx` command-line front end: synthesize or ingest prices, build feature
//! frames, label, train, grid-search, simulate trading and report.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fx_core::ingest::Regime;

pub use commands::Context;
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fx", version, about = "EUR/USD LSTM forecasting and trading simulation")]
pub struct Cli {
    /// Master seed (synthetic data, weight init, shuffling, dropout).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the grid; default is every available core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Leave the timestamp line out of outputs so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Run directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GridAxes {
    /// Comma-separated epoch counts.
    #[arg(long, value_delimiter = ',')]
    pub epochs: Option<Vec<usize>>,
    /// Comma-separated layer counts.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Comma-separated look-back lengths.
    #[arg(long = "back-days", value_delimiter = ',')]
    pub back_days: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic daily price series and macro releases.
    Synth {
        #[arg(long)]
        days: Option<usize>,
        /// random_walk, trending or mean_reverting.
        #[arg(long)]
        regime: Option<Regime>,
    },
    /// Build one feature frame per model.
    Features {
        /// Comma-separated model ids (default: config `models`).
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<u8>>,
    },
    /// Write the directional index and target per day.
    Label,
    /// Train one configuration and save its checkpoint.
    Train {
        #[arg(long)]
        model: u8,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long = "back-days")]
        back_days: Option<usize>,
    },
    /// Train and evaluate every grid cell (resumable).
    Grid {
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<u8>>,
        #[command(flatten)]
        axes: GridAxes,
    },
    /// Run both trading regimes on model signals.
    Simulate {
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<u8>>,
        /// Checkpoint to use (single model only).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Set spread and commission to zero.
        #[arg(long)]
        zero_cost: bool,
        /// Score every row instead of the test split.
        #[arg(long)]
        all_rows: bool,
    },
    /// Collect grid and simulation tables into report.txt.
    Report,
}

/// Defaults, then the config file, then flags.
pub fn resolve(cli: &Cli) -> Result<Context, CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.out_dir = o.clone();
    }
    match &cli.command {
        Command::Features { models: Some(m) } => config.models = m.clone(),
        Command::Grid { models, axes } => {
            if let Some(m) = models {
                config.models = m.clone();
            }
            if let Some(v) = &axes.epochs {
                config.epochs = v.clone();
            }
            if let Some(v) = &axes.layers {
                config.layers = v.clone();
            }
            if let Some(v) = &axes.back_days {
                config.back_days = v.clone();
            }
        }
        Command::Simulate { models: Some(m), .. } => config.models = m.clone(),
        _ => {}
    }
    config.validate()?;
    if cli.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    Ok(Context {
        config,
        jobs: cli.jobs,
        timestamp: !cli.no_timestamp,
    })
}

/// Executes a parsed command line, returning a one-line summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let ctx = resolve(cli)?;
    match &cli.command {
        Command::Synth { days, regime } => commands::cmd_synth(&ctx, *days, *regime),
        Command::Features { .. } => commands::cmd_features(&ctx, &ctx.config.models),
        Command::Label => commands::cmd_label(&ctx),
        Command::Train {
            model,
            epochs,
            layers,
            back_days,
        } => {
            if *model > 9 {
                return Err(CliError::Usage(format!("unknown model {model}")));
            }
            commands::cmd_train(&ctx, *model, *epochs, *layers, *back_days)
        }
        Command::Grid { .. } => commands::cmd_grid(&ctx),
        Command::Simulate {
            checkpoint,
            zero_cost,
            all_rows,
            ..
        } => commands::cmd_simulate(&ctx, checkpoint.as_deref(), *zero_cost, *all_rows),
        Command::Report => commands::cmd_report(&ctx),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("fx: {e}");
            e.exit_code()
        }
    }
}
