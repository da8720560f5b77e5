use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;

use backreach_core::encoder::{SolverConfig, SolverError};
use backreach_core::engine::EngineConfig;
use backreach_core::explorer::{CheckMode, Limits};

/// Finds a transaction sequence that reaches a target line of a MiniSol
/// contract, optionally with a condition holding on arrival.
#[derive(Debug, Clone, Parser)]
#[command(name = "backreach", version)]
pub struct Args {
    /// MiniSol source file.
    pub input: PathBuf,

    /// Annotated line to target when the file has several; any statement
    /// line without a condition otherwise.
    #[arg(long, value_name = "N")]
    pub target_line: Option<u32>,

    #[arg(long, value_name = "NAME", default_value = "floyd-warshall")]
    pub heuristic: String,

    /// Solver command line; the script is sent on stdin.
    #[arg(long, value_name = "STR", default_value = SolverConfig::DEFAULT_COMMAND)]
    pub solver_cmd: String,

    /// Maximum solver submissions.
    #[arg(long, value_name = "N", default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_walks: u64,

    /// Maximum nodes in one walk.
    #[arg(long, value_name = "N", default_value_t = 400, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_walk_len: u64,

    /// Wall-clock budget for the search, in seconds.
    #[arg(long, value_name = "SECS", default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout: u64,

    /// Write the JSON result here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Write the contract graph in DOT format.
    #[arg(long, value_name = "PATH")]
    pub emit_dot: Option<PathBuf>,

    /// Write every solver query into this directory.
    #[arg(long, value_name = "DIR")]
    pub emit_smt: Option<PathBuf>,

    /// Skip confirming found sequences by concrete replay.
    #[arg(long)]
    pub no_replay_check: bool,

    /// Check satisfiability only at transaction boundaries.
    #[arg(long)]
    pub lazy_check: bool,

    /// Generate and solve kill queries for the mutants in this JSON file.
    #[arg(long, value_name = "PATH", conflicts_with = "replay")]
    pub mutants: Option<PathBuf>,

    /// Replay a sequence file and print the replay report.
    #[arg(long, value_name = "PATH")]
    pub replay: Option<PathBuf>,
}

impl Args {
    pub fn engine_config(&self) -> Result<EngineConfig, SolverError> {
        let timeout = Duration::from_secs(self.timeout);
        Ok(EngineConfig {
            heuristic: self.heuristic.clone(),
            solver: SolverConfig::from_command_line(&self.solver_cmd, timeout)?,
            limits: Limits { max_walk_len: self.max_walk_len as usize, max_walks: self.max_walks, timeout },
            mode: if self.lazy_check { CheckMode::Lazy } else { CheckMode::Eager },
            emit_smt: self.emit_smt.clone(),
        })
    }
}
