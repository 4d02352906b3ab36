use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "dospde", version, about = "Two-obstacle SPDE solvers and validation checks")]
pub struct Cli {
    /// Worker threads (0 = one per available core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write u, the two measures and diagnostics.
    Solve {
        /// Problem file path or bundled instance name.
        config: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Projected)]
        mode: ModeArg,
        /// Penalty level n for the penalized modes (default 100).
        #[arg(long)]
        penalty: Option<f64>,
        /// Override the noise seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Penalization sweep over levels n (upper barrier penalized, lower reflected).
    Sweep {
        config: String,
        /// Comma-separated levels, e.g. "1,2,4,8".
        #[arg(long, default_value = "1,2,4,8,16,32,64,128,256")]
        levels: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Picard iteration for coefficients depending on (y, z1).
    Picard {
        config: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a validation suite ("default" or a suite file).
    Validate {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the job recorded in a manifest.json.
    Replay {
        manifest: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    /// Obstacles ignored.
    Free,
    /// Exact reflection.
    Projected,
    /// Upper barrier penalized, lower reflected.
    Penalized,
    /// Both barriers penalized.
    PenalizedDouble,
}

impl ModeArg {
    pub fn name(self) -> &'static str {
        match self {
            ModeArg::Free => "free",
            ModeArg::Projected => "projected",
            ModeArg::Penalized => "penalized",
            ModeArg::PenalizedDouble => "penalized-double",
        }
    }
}

pub fn parse_levels(src: &str) -> Result<Vec<f64>, CliError> {
    let levels = src
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("bad level {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if levels.is_empty() {
        return Err(CliError::Config("empty level list".into()));
    }
    Ok(levels)
}
