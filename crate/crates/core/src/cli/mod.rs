//! Command-line surface: `prepare`, `train`, `evaluate`, `ablate`, `sweep`,
//! `generate` and `selftest`.
//!
//! Exit codes: 0 ok, 1 selftest failure, 2 input error, 3 numeric failure,
//! 4 artifact mismatch.

mod commands;
mod config;
mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::CliError;
pub use config::{Boundary, CentricitySel, ConfigError, Precision, RunConfig, KEYS};
pub use selftest::{run_selftest, SelftestReport, SuiteResult};

#[derive(Debug, Parser)]
#[command(name = "dcn", version, about = "Dual-sequence contrastive sequential recommendation")]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for every randomized step.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest a CSV log, n-core filter it and split it chronologically.
    Prepare(Overrides),
    /// Train on prepared splits; writes checkpoint, history and test reports.
    Train(Overrides),
    /// Evaluate a checkpoint on the test split.
    Evaluate(Overrides),
    /// Train and evaluate the four DR×DI switch settings.
    Ablate(Overrides),
    /// Train and evaluate one model per contrastive weight in the grid.
    Sweep(Overrides),
    /// Write a synthetic planted-pattern interaction log.
    Generate(GenerateArgs),
    /// Gradient checks, metric oracles and invariant suites.
    Selftest(SelftestArgs),
}

macro_rules! overrides {
    ($($field:ident),+ $(,)?) => {
        /// Per-key overrides of the run config (see `KEYS` for meanings).
        #[derive(Debug, Default, Args)]
        struct Overrides {
            $(
                #[arg(long)]
                $field: Option<String>,
            )+
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )+
                out
            }
        }
    };
}

overrides!(
    input,
    data,
    checkpoint,
    n_core,
    train_end,
    valid_end,
    precision,
    centricity,
    grid,
    embed_dim,
    batch_size,
    lr,
    max_seq_len,
    epochs_max,
    patience,
    lambda_e,
    lambda_p,
    lambda_reg,
    backbone,
    static_tower_input,
    aux_on_negatives,
    hidden,
    k_neg_train,
    k_neg_valid,
    k_neg_eval,
    cutoff,
);

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 300)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 20_000)]
    interactions: usize,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Corrupt the backward rule of one op (fixture for the failure path).
    #[arg(long, hide = true, value_name = "OP")]
    inject_fault: Option<String>,
}

fn resolve(cli: &Cli, overrides: Option<&Overrides>) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(o) = overrides {
        for (k, v) in o.pairs() {
            cfg.set(k, v)?;
        }
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Selftest(a) => commands::selftest(a.inject_fault.as_deref()),
        Command::Generate(a) => resolve(&cli, None).map_err(CliError::from).and_then(|cfg| {
            commands::generate(&cfg, a.users, a.items, a.clusters, a.interactions)
        }),
        Command::Prepare(o)
        | Command::Train(o)
        | Command::Evaluate(o)
        | Command::Ablate(o)
        | Command::Sweep(o) => resolve(&cli, Some(o)).map_err(CliError::from).and_then(|cfg| match &cli.command {
            Command::Prepare(_) => commands::prepare(&cfg),
            Command::Train(_) => commands::train(&cfg),
            Command::Evaluate(_) => commands::evaluate(&cfg),
            Command::Ablate(_) => commands::ablate(&cfg),
            _ => commands::sweep(&cfg),
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
