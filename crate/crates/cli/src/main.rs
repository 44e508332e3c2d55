//! `regomax`: batch front end for the trade network pipeline.
//!
//! Exit codes: 0 on success, 1 when a numerical method fails, 2 for usage and
//! input errors.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "regomax", version, about = "Google matrix analysis of multiproduct trade networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// PageRank, CheiRank, ImportRank and ExportRank tables.
    Rank {
        /// Also dump both Google matrices as triples plus sidecar.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Reduced Google matrices of the selection with all components.
    Reduce,
    /// Trade balance sensitivity of the group to a price shock of the source node.
    Sensitivity {
        /// Also rebuild the full network under a worldwide price change of the source product.
        #[arg(long)]
        global_price: bool,
    },
    /// Strongest import and export links inside the reduced network.
    Network,
    /// Writes a synthetic trade fixture and its registry.
    Synth {
        #[arg(long, default_value_t = 10)]
        countries: usize,
        #[arg(long, default_value_t = 4)]
        products: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Output CSV; defaults to `<out-dir>/synth.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(regomax_core::error::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<regomax_core::error::Error> for CliError {
    fn from(e: regomax_core::error::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            _ => 2,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.common)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", cfg.out_dir.display())))?;
    match cli.command {
        Command::Rank { dump_matrix } => commands::rank(&cfg, dump_matrix),
        Command::Reduce => commands::reduce(&cfg),
        Command::Sensitivity { global_price } => commands::sensitivity(&cfg, global_price),
        Command::Network => commands::network(&cfg),
        Command::Synth {
            countries,
            products,
            density,
            out,
        } => commands::synth(&cfg, countries, products, density, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("regomax: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
