use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use thiserror::Error;

use backreach_core::cfg::{build_cfg_plus, to_dot, CfgPlus};
use backreach_core::concretizer::TransactionSequence;
use backreach_core::encoder::SolverError;
use backreach_core::engine::{solve, EngineError};
use backreach_core::explorer::HeuristicRegistry;
use backreach_core::frontend::{
    extract_targets, parse_contract, target_for_line, ContractAst, FrontendError, TargetSpec,
};
use backreach_core::ir::{lower, IrError};
use backreach_core::mutation::MutationError;
use backreach_core::oracle::{replay, ReplayError};

use crate::args::Args;
use crate::mutants;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("cannot write `{path}`: {reason}")]
    Write { path: PathBuf, reason: String },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error("invalid sequence file: {0}")]
    Sequence(String),
    #[error("no `// @target` annotation; pass --target-line")]
    NoTarget,
    #[error("several targets (lines {0}); pick one with --target-line")]
    AmbiguousTarget(String),
    #[error("replay did not confirm the sequence: {0}")]
    Unverified(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Found,
    NotFound,
    Error,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Found => "found",
            Status::NotFound => "notfound",
            Status::Error => "error",
        }
    }

    fn exit_code(self) -> ExitCode {
        match self {
            Status::Found => ExitCode::SUCCESS,
            Status::NotFound => ExitCode::from(1),
            Status::Error => ExitCode::from(2),
        }
    }
}

/// What a mode reports back for the summary line.
pub struct Finished {
    pub status: Status,
    pub walks: u64,
}

pub fn main(args: &Args) -> ExitCode {
    let started = Instant::now();
    let finished = if args.replay.is_some() {
        replay_mode(args)
    } else if args.mutants.is_some() {
        mutants::run(args)
    } else {
        search_mode(args)
    };
    let finished = finished.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Finished { status: Status::Error, walks: 0 }
    });
    eprintln!("result={} walks={} time_ms={}", finished.status.as_str(), finished.walks, started.elapsed().as_millis());
    finished.status.exit_code()
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Read { path: path.to_owned(), reason: e.to_string() })
}

/// Writes `text` to `--out`, or stdout without it.
pub fn emit(args: &Args, text: &str) -> Result<(), CliError> {
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Write { path: path.clone(), reason: e.to_string() }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parsed input plus its graph; writes the DOT file when asked.
pub struct Loaded {
    pub source: String,
    pub ast: ContractAst,
    pub graph: CfgPlus,
}

pub fn load(args: &Args) -> Result<Loaded, CliError> {
    let source = read(&args.input)?;
    let ast = parse_contract(&source)?;
    let graph = build_cfg_plus(lower(&ast)?);
    if let Some(path) = &args.emit_dot {
        fs::write(path, to_dot(&graph)).map_err(|e| CliError::Write { path: path.clone(), reason: e.to_string() })?;
    }
    Ok(Loaded { source, ast, graph })
}

fn select_target(args: &Args, loaded: &Loaded) -> Result<TargetSpec, CliError> {
    let mut targets = extract_targets(&loaded.source)?;
    match args.target_line {
        Some(line) => match targets.iter().position(|t| t.line == line) {
            Some(i) => Ok(targets.swap_remove(i)),
            None => Ok(target_for_line(&loaded.ast, line, None)?),
        },
        None if targets.len() == 1 => Ok(targets.remove(0)),
        None if targets.is_empty() => Err(CliError::NoTarget),
        None => {
            Err(CliError::AmbiguousTarget(targets.iter().map(|t| t.line.to_string()).collect::<Vec<_>>().join(", ")))
        }
    }
}

/// The JSON artifact. Timing goes to the summary line only, so that
/// identical runs produce identical files.
pub fn artifact(seq: &TransactionSequence) -> String {
    TransactionSequence { time_ms: 0, ..seq.clone() }.to_json()
}

fn search_mode(args: &Args) -> Result<Finished, CliError> {
    let loaded = load(args)?;
    let spec = select_target(args, &loaded)?;
    let cfg = args.engine_config()?;
    let solution = solve(&loaded.graph, &spec, &cfg, &HeuristicRegistry::default())?;
    let walks = solution.stats.walks_explored;
    match solution.sequence {
        Ok(seq) => {
            if !args.no_replay_check {
                let report = replay(&loaded.graph.program, &seq, &spec)?;
                if !report.confirmed() {
                    return Err(CliError::Unverified(unconfirmed_reason(report.target_hit)));
                }
            }
            emit(args, &artifact(&seq))?;
            Ok(Finished { status: Status::Found, walks })
        }
        Err(reason) => {
            eprintln!("not found: {}", reason.as_str());
            Ok(Finished { status: Status::NotFound, walks })
        }
    }
}

pub fn unconfirmed_reason(target_hit: bool) -> String {
    match target_hit {
        true => "target reached but the condition was false".into(),
        false => "target line never executed".into(),
    }
}

fn replay_mode(args: &Args) -> Result<Finished, CliError> {
    let loaded = load(args)?;
    let path = args.replay.as_ref().expect("replay mode");
    let seq = TransactionSequence::from_json(&read(path)?).map_err(|e| CliError::Sequence(e.to_string()))?;
    let spec = target_for_line(&loaded.ast, seq.target.line, seq.target.safety.as_deref())?;
    let report = replay(&loaded.graph.program, &seq, &spec)?;
    emit(args, &report.to_json())?;
    let status = if report.confirmed() { Status::Found } else { Status::NotFound };
    Ok(Finished { status, walks: 0 })
}
