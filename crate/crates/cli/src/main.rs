//! `talbot`: prepare spin-orbit lattice fields, propagate them, slice
//! Talbot carpets and analyze recorded intensity images.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "talbot", version, about = "Talbot self-imaging of spin-orbit lattices")]
struct Cli {
    /// INI run configuration (a previous manifest.txt also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for stochastic steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the z = 0 field and write its intensity and field dump.
    Prepare,
    /// Propagate to every plane in `optics.planes`.
    Propagate,
    /// Record a longitudinal intensity slice.
    Carpet,
    /// Measure spacing, SNR, chirality, shifts and NCC of PGM images.
    Analyze {
        /// Input images (PGM with optional `.meta.txt` sidecar).
        inputs: Vec<PathBuf>,
        /// Dark/background frame subtracted before filtering.
        #[arg(long)]
        background: Option<PathBuf>,
        /// Image pair `i:j` to register; repeatable.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(usize, usize)>,
    },
    /// Run the built-in numerical checks.
    Selftest {
        #[arg(long, hide = true)]
        corrupt_transfer_sign: bool,
    },
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s.split_once(':').ok_or_else(|| format!("expected i:j, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad index {v:?}"));
    Ok((p(i)?, p(j)?))
}

fn load_config(path: Option<&Path>, required: bool) -> CliResult<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            RunConfig::parse(&text)
        }
        None if required => Err(CliError::config("--config", "this command needs a configuration file")),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> CliResult<bool> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let ctx = Context { out: cli.out, seed: cli.seed, threads: rayon::current_num_threads() };
    let config = cli.config.as_deref();
    match cli.command {
        Command::Prepare => commands::prepare(&ctx, &load_config(config, true)?)?,
        Command::Propagate => commands::propagate_planes(&ctx, &load_config(config, true)?)?,
        Command::Carpet => commands::carpet_slice(&ctx, &load_config(config, true)?)?,
        Command::Analyze { inputs, background, pairs } => {
            commands::analyze(&ctx, &load_config(config, false)?, &inputs, background.as_deref(), &pairs)?
        }
        Command::Selftest { corrupt_transfer_sign } => return Ok(commands::selftest(&ctx, corrupt_transfer_sign)),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("talbot: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
