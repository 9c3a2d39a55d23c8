//! Command-line driver for the byproduct market simulator. Experiments are
//! read from TOML files and written out as CSV and JSON.

pub mod batch;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::batch::default_workers;
use crate::commands::{PdpSpec, SobolSpec, SweepSpec};
use crate::config::parse_list;
pub use crate::error::{CliError, CliResult};
use crate::output::Manifest;

#[derive(Debug, Parser)]
#[command(name = "ismarket", version, about = "Spatial byproduct market simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file of market parameters; c_d, s and rho are required.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Directory to write outputs into (created if missing).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Replace one config field, e.g. `--override horizon=10`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One simulation run.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Grid of parameter values times replicates, aggregated per cell.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `field=v1,v2,...`; repeat for more fields.
        #[arg(long = "grid", value_name = "FIELD=VALUES", required = true)]
        grid: Vec<String>,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        /// Trailing timesteps defining final price and SI.
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Also write each run's time series under runs/.
        #[arg(long)]
        per_run: bool,
        /// Worker threads; defaults to $ISMARKET_WORKERS or the CPU count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sobol indices of final SI and price over the standard parameter space.
    Sobol {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 256)]
        base_n: usize,
        #[arg(long, default_value_t = 2)]
        replicates: usize,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long)]
        second_order: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Partial dependence and ICE curves at fixed density levels.
    Pdp {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "c_d")]
        sweep_dim: String,
        /// Comma-separated density levels.
        #[arg(long, default_value = "0.0001,0.001,0.01")]
        levels: String,
        #[arg(long, default_value_t = 9)]
        grid_n: usize,
        #[arg(long, default_value_t = 20)]
        background_n: usize,
        #[arg(long, default_value_t = 2)]
        replicates: usize,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Per-step counterfactual regret with rolling medians.
    Regret {
        #[command(flatten)]
        common: Common,
        /// Rolling-median window.
        #[arg(long, default_value_t = 50)]
        window: usize,
    },
    /// Dump the generated firm layout as JSON.
    Layout {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_grid(items: &[String]) -> CliResult<Vec<(String, Vec<f64>)>> {
    items
        .iter()
        .map(|g| {
            let (key, values) = g
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("grid `{g}` is not of the form field=v1,v2")))?;
            Ok((key.trim().to_string(), parse_list(values)?))
        })
        .collect()
}

pub fn execute(command: Command) -> CliResult<Manifest> {
    let load = |c: &Common| config::load(&c.config, &c.overrides);
    let workers = |w: Option<usize>| w.filter(|&n| n > 0).unwrap_or_else(default_workers);
    match command {
        Command::Run { common } => commands::cmd_run(&load(&common)?, &common.out),
        Command::Sweep { common, grid, replicates, window, per_run, workers: w } => {
            let spec = SweepSpec { grid: parse_grid(&grid)?, replicates, window, per_run };
            commands::cmd_sweep(&load(&common)?, &spec, workers(w), &common.out)
        }
        Command::Sobol { common, base_n, replicates, window, second_order, workers: w } => {
            let spec = SobolSpec { base_n, replicates, window, second_order };
            commands::cmd_sobol(&load(&common)?, &spec, workers(w), &common.out)
        }
        Command::Pdp { common, sweep_dim, levels, grid_n, background_n, replicates, window, workers: w } => {
            let spec = PdpSpec { sweep_dim, levels: parse_list(&levels)?, grid_n, background_n, replicates, window };
            commands::cmd_pdp(&load(&common)?, &spec, workers(w), &common.out)
        }
        Command::Regret { common, window } => commands::cmd_regret(&load(&common)?, window, &common.out),
        Command::Layout { common } => commands::cmd_layout(&load(&common)?, &common.out),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
