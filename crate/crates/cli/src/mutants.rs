//! `--mutants`: solve every kill query and check the kill by replaying
//! on both programs.

use serde::Serialize;

use backreach_core::cfg::build_cfg_plus;
use backreach_core::concretizer::Transaction;
use backreach_core::engine::{solve, EngineConfig};
use backreach_core::explorer::HeuristicRegistry;
use backreach_core::frontend::TargetInfo;
use backreach_core::ir::lower;
use backreach_core::mutation::{
    differential_replay, kill_queries, mutate, parse_mutants, Divergence, MutantSpec, Subject,
};
use backreach_core::oracle::replay;

use crate::args::Args;
use crate::run::{emit, load, read, unconfirmed_reason, CliError, Finished, Loaded, Status};

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Verdict {
    Killed,
    /// A sequence satisfying the infection was found but both programs
    /// behaved the same on it.
    Survived,
    NotFound,
}

#[derive(Debug, Serialize)]
struct QueryReport {
    description: String,
    target: TargetInfo,
    subject: Subject,
    result: Verdict,
    walks_explored: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence: Option<Divergence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transactions: Option<Vec<Transaction>>,
}

#[derive(Debug, Serialize)]
struct MutantReport {
    mutant: MutantSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    queries: Vec<QueryReport>,
}

pub fn run(args: &Args) -> Result<Finished, CliError> {
    let loaded = load(args)?;
    let specs = parse_mutants(&read(args.mutants.as_ref().expect("mutants mode"))?)?;
    let cfg = args.engine_config()?;
    let registry = HeuristicRegistry::default();
    let mut reports = Vec::with_capacity(specs.len());
    let mut walks = 0;
    for spec in specs {
        let mut queries = Vec::new();
        let error = solve_mutant(args, &loaded, &spec, &cfg, &registry, &mut queries).err().map(|e| e.to_string());
        walks += queries.iter().map(|q| q.walks_explored).sum::<u64>();
        reports.push(MutantReport { mutant: spec, error, queries });
    }
    let mut text = serde_json::to_string_pretty(&reports).expect("reports serialize");
    text.push('\n');
    emit(args, &text)?;

    let status = if reports.iter().any(|r| r.error.is_some()) {
        Status::Error
    } else if reports.iter().flat_map(|r| &r.queries).any(|q| matches!(q.result, Verdict::Killed)) {
        Status::Found
    } else {
        Status::NotFound
    };
    for r in reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("mutant at line {}: {}", r.mutant.line, r.error.as_deref().unwrap_or_default());
    }
    Ok(Finished { status, walks })
}

fn solve_mutant(
    args: &Args,
    loaded: &Loaded,
    spec: &MutantSpec,
    cfg: &EngineConfig,
    registry: &HeuristicRegistry,
    out: &mut Vec<QueryReport>,
) -> Result<(), CliError> {
    let queries = kill_queries(&loaded.ast, spec)?;
    let mutant = build_cfg_plus(lower(&mutate(&loaded.ast, spec)?)?);
    for q in queries {
        let graph = match q.subject {
            Subject::Original => &loaded.graph,
            Subject::Mutant => &mutant,
        };
        let solution = solve(graph, &q.target, cfg, registry)?;
        let mut report = QueryReport {
            description: q.description.clone(),
            target: q.target.info(),
            subject: q.subject,
            result: Verdict::NotFound,
            walks_explored: solution.stats.walks_explored,
            divergence: None,
            transactions: None,
        };
        if let Ok(seq) = solution.sequence {
            if !args.no_replay_check {
                let confirmed = replay(&graph.program, &seq, &q.target)?;
                if !confirmed.confirmed() {
                    return Err(CliError::Unverified(unconfirmed_reason(confirmed.target_hit)));
                }
            }
            let d = differential_replay(&loaded.graph.program, &mutant.program, &seq.transactions)?;
            report.result = if d.killed() { Verdict::Killed } else { Verdict::Survived };
            report.divergence = Some(d);
            report.transactions = Some(seq.transactions);
        }
        out.push(report);
    }
    Ok(())
}
