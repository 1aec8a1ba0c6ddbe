//! `wmr`: tradeoff tables, end-to-end shuffle simulation and schedule
//! verification for MapReduce over a wireless interference channel.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 decode or verification
//! failure, 3 I/O error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wmr_core::scheduler::DEFAULT_ORACLE_CAP;

use crate::commands::VerifyMode;
use crate::config::{Layer, RunConfig, Scalar, ToleranceLayer};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "wmr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Communication load against computation load, as CSV and JSON.
    Tradeoff {
        #[command(flatten)]
        common: Common,
        /// Comma-separated loads; fractions like 3/2 or 1.5 are time-shared.
        #[arg(long, value_delimiter = ',')]
        r_values: Option<Vec<String>>,
        /// Closed forms only; skip the scheduler.
        #[arg(long)]
        no_simulate: bool,
    },
    /// Place, schedule, beamform, transmit and decode one instance.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the scheduler with the converse bound and the oracle.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "auto")]
        mode: VerifyMode,
    },
    /// Exhaustive minimum block count for a small instance.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Give up above this many blocks.
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: u32,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, overrides_with = "no_noise")]
    noise: bool,
    #[arg(long, overrides_with = "noise")]
    no_noise: bool,
    #[arg(long, allow_negative_numbers = true)]
    power_db: Option<f64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    r: Option<String>,
    /// Packet length in symbols.
    #[arg(long)]
    tau: Option<usize>,
    /// Instance document (placement and reduce sets) instead of a symmetric one.
    #[arg(long)]
    placement: Option<PathBuf>,
    #[arg(long)]
    zf_tol: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
}

impl Common {
    fn into_layer(self) -> (Layer, Option<PathBuf>) {
        let noise = match (self.noise, self.no_noise) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        };
        let tolerances = (self.zf_tol.is_some() || self.residual_tol.is_some()).then(|| {
            ToleranceLayer {
                zf_tol: self.zf_tol,
                residual_tol: self.residual_tol,
                ..ToleranceLayer::default()
            }
        });
        let layer = Layer {
            preset: self.preset,
            k: self.k,
            n: self.n,
            q: self.q,
            r: self.r.map(Scalar::Text),
            seed: self.seed,
            power_db: self.power_db,
            noise,
            tau: self.tau,
            workers: self.workers,
            out: self.out,
            placement: self.placement,
            tolerances,
            ..Layer::default()
        };
        (layer, self.config)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Tradeoff { common, r_values, no_simulate } => {
            let (mut layer, file) = common.into_layer();
            layer.r_values = r_values.map(|v| v.into_iter().map(Scalar::Text).collect());
            if no_simulate {
                layer.simulate = Some(false);
            }
            commands::tradeoff(&RunConfig::load(layer, file.as_deref())?)
        }
        Command::Simulate { common } => {
            let (layer, file) = common.into_layer();
            commands::simulate(&RunConfig::load(layer, file.as_deref())?)
        }
        Command::Verify { common, mode } => {
            let (layer, file) = common.into_layer();
            commands::verify(&RunConfig::load(layer, file.as_deref())?, mode)
        }
        Command::Oracle { common, cap } => {
            let (layer, file) = common.into_layer();
            commands::oracle(&RunConfig::load(layer, file.as_deref())?, cap)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
