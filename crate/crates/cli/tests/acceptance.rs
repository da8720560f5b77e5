//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines are always printed.

use std::collections::BTreeSet;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::thread;

use rand::SeedableRng;

use backreach_core::cfg::{build_cfg_plus, to_dot, CfgPlus, NodeId};
use backreach_core::concretizer::{concretize, RunInfo, Transaction, TransactionSequence};
use backreach_core::encoder::{ssa_number, SolverConfig, SolverSession};
use backreach_core::engine::{resolve_target, run_search, EngineConfig, EngineOutcome};
use backreach_core::explorer::HeuristicRegistry;
use backreach_core::frontend::{extract_targets, parse_contract, TargetSpec};
use backreach_core::ir::{lower, FuncRef, IrFunction};
use backreach_core::oracle::{exhaustive_search, replay, Replayer, SearchBounds};
use backreach_core::testgen::checks::{check_numbering, model_matches_replay};
use backreach_core::testgen::{random_contract, random_walk, straight_line_case, GenConfig, Rng8};
use backreach_core::types::{Account, U256};

/// Targeted corpus contracts that must be found.
const FOUND: &[&str] = &[
    "overflow",
    "mapping_sample",
    "multi_tx",
    "simple_condition",
    "msg_value",
    "two_tx_overflow",
    "internal_call",
    "token",
];

const SAMPLES: usize = 500;

type Check = fn() -> Result<String, String>;

const CRITERIA: [(&str, Check); 8] = [
    ("corpus end-to-end", corpus_end_to_end),
    ("multi-transaction heuristic comparison", heuristic_comparison),
    ("mutant kill", mutant_kill),
    ("single-assignment scans on random walks", ssa_scans),
    ("encoder/interpreter equivalence", encoder_equivalence),
    ("exhaustive-search agreement", exhaustive_agreement),
    ("CFG+ structure and DOT stability", cfg_structure),
    ("determinism", determinism),
];

fn main() -> ExitCode {
    // The first criterion has a time limit, so it runs before the rest
    // start competing for the CPU.
    let (timed, rest) = CRITERIA.split_at(1);
    let mut results: Vec<Result<String, String>> = vec![run(timed[0].1)];
    results.extend(thread::scope(|s| {
        let handles: Vec<_> = rest.iter().map(|(_, check)| s.spawn(|| run(*check))).collect();
        handles.into_iter().map(|h| h.join().expect("checks catch their panics")).collect::<Vec<_>>()
    }));
    let mut failed = 0;
    for (i, ((name, _), result)) in CRITERIA.iter().zip(&results).enumerate() {
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(check: Check) -> Result<String, String> {
    panic::catch_unwind(check).unwrap_or_else(|e| {
        let text = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", text.unwrap_or_default()))
    })
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn source(name: &str) -> String {
    fs::read_to_string(corpus(&format!("{name}.msol"))).expect("corpus file")
}

fn graph(src: &str) -> CfgPlus {
    build_cfg_plus(lower(&parse_contract(src).expect("parses")).expect("lowers"))
}

fn backreach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backreach")).args(args).output().expect("binary runs")
}

/// `time_ms` from the stderr summary line.
fn summary_time(out: &Output) -> Option<u64> {
    let text = String::from_utf8_lossy(&out.stderr);
    text.lines().last()?.split(' ').find_map(|f| f.strip_prefix("time_ms="))?.parse().ok()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus_end_to_end() -> Result<String, String> {
    let mut slowest = (0, "");
    for name in FOUND {
        let path = corpus(&format!("{name}.msol"));
        let out = backreach(&[path.to_str().unwrap()]);
        ensure(out.status.code() == Some(0), || format!("{name}: exit {:?}", out.status.code()))?;
        let seq = TransactionSequence::from_json(&String::from_utf8_lossy(&out.stdout)).map_err(|e| e.to_string())?;
        // Confirm again here rather than trusting the binary's own check.
        let src = source(name);
        let spec = extract_targets(&src).map_err(|e| e.to_string())?.remove(0);
        let report = replay(&graph(&src).program, &seq, &spec).map_err(|e| e.to_string())?;
        ensure(report.target_hit && report.safety_value == Some(true), || format!("{name}: replay {report:?}"))?;
        let ms = summary_time(&out).ok_or_else(|| format!("{name}: no summary line"))?;
        ensure(ms < 60_000, || format!("{name}: {ms} ms"))?;
        slowest = slowest.max((ms, *name));
    }
    Ok(format!("{} contracts found and confirmed, slowest {} in {} ms", FOUND.len(), slowest.1, slowest.0))
}

fn walks(src: &str, heuristic: &str) -> Result<u64, String> {
    let g = graph(src);
    let spec = extract_targets(src).map_err(|e| e.to_string())?.remove(0);
    let target = resolve_target(&g, &spec).map_err(|e| e.to_string())?;
    let cfg = EngineConfig { heuristic: heuristic.into(), ..EngineConfig::default() };
    let result = run_search(&g, &target, &cfg, &HeuristicRegistry::default()).map_err(|e| e.to_string())?;
    match result.outcome {
        EngineOutcome::Found { .. } => Ok(result.stats.walks_explored),
        other => Err(format!("{heuristic}: {other:?}")),
    }
}

fn heuristic_comparison() -> Result<String, String> {
    let base = source("multi_tx");
    let mut ratios = Vec::new();
    let mut last = (0, 0);
    for threshold in 1..=5 {
        let src = base.replace("threshold = 5", &format!("threshold = {threshold}"));
        let fw = walks(&src, "floyd-warshall")?;
        let sv = walks(&src, "state-var")?;
        ratios.push(sv as f64 / fw as f64);
        last = (fw, sv);
    }
    let (fw, sv) = last;
    ensure(sv < fw, || format!("threshold 5: state-var {sv} >= floyd-warshall {fw}"))?;
    ensure(ratios.windows(2).all(|w| w[1] <= w[0]), || format!("ratios {ratios:.3?}"))?;
    ensure((100..=5000).contains(&fw), || format!("floyd-warshall explored {fw} walks at threshold 5"))?;
    Ok(format!("threshold 5: floyd-warshall {fw}, state-var {sv}; ratios {ratios:.3?}"))
}

fn mutant_kill() -> Result<String, String> {
    let out = backreach(&[
        "--mutants",
        corpus("mutant_killing.mutants.json").to_str().unwrap(),
        corpus("mutant_killing.msol").to_str().unwrap(),
    ]);
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let condition = &reports[0];
    ensure(condition["mutant"]["mutated"] == "a >= b", || format!("first mutant is {}", condition["mutant"]))?;
    let query = &condition["queries"][0];
    ensure(query["result"] == "killed", || format!("condition mutant: {query}"))?;
    let args = &query["transactions"][1]["args"];
    ensure(args[0] == args[1], || format!("arguments {args}"))?;
    let divergence = &query["divergence"];
    ensure(divergence["weak"] == true || divergence["strong"] == true, || format!("divergence {divergence}"))?;
    let equivalent = &reports[1];
    ensure(equivalent["mutant"]["original"] == equivalent["mutant"]["mutated"], || "second mutant changed".into())?;
    ensure(equivalent["queries"][0]["result"] == "not_found", || format!("equivalent: {equivalent}"))?;
    Ok(format!("a >= b killed with a = b = {}, equivalent mutant not found", args[0].as_str().unwrap_or("?")))
}

fn ssa_scans() -> Result<String, String> {
    let mut steps = 0;
    for seed in 0..SAMPLES as u64 {
        let mut rng = Rng8::seed_from_u64(seed);
        let generated = random_contract(&mut rng, GenConfig::default());
        let g = graph(&generated.source);
        let walk = random_walk(&g, &mut rng, 1 + seed as usize % 60);
        let script = ssa_number(&g, &walk, None).map_err(|e| format!("seed {seed}: {e}"))?;
        check_numbering(&script).map_err(|e| format!("seed {seed}: {e}"))?;
        steps += walk.len();
    }
    Ok(format!("{SAMPLES} walks ({steps} nodes), 0 failures"))
}

fn encoder_equivalence() -> Result<String, String> {
    let mut session = SolverSession::new(SolverConfig::default());
    let (mut sat, mut definitions, mut cells) = (0, 0, 0);
    for seed in 0..SAMPLES as u64 {
        let (_, g, spec) = straight_line_case(&mut Rng8::seed_from_u64(seed));
        if let Some(c) = model_matches_replay(&g, &spec, &mut session).map_err(|e| format!("seed {seed}: {e}"))? {
            sat += 1;
            definitions += c.definitions;
            cells += c.cells;
        }
    }
    ensure(sat == SAMPLES, || format!("only {sat} of {SAMPLES} programs satisfiable"))?;
    Ok(format!("{SAMPLES} programs, {definitions} values and {cells} table cells matched, 0 mismatches"))
}

/// Engine result for the single target of `src`.
fn engine_sequence(src: &str) -> Result<(TargetSpec, Option<Vec<Transaction>>), String> {
    let g = graph(src);
    let spec = extract_targets(src).map_err(|e| e.to_string())?.remove(0);
    let target = resolve_target(&g, &spec).map_err(|e| e.to_string())?;
    let cfg = EngineConfig::default();
    let result = run_search(&g, &target, &cfg, &HeuristicRegistry::default()).map_err(|e| e.to_string())?;
    match &result.outcome {
        EngineOutcome::Found { script, model, .. } => {
            let info = RunInfo { target: spec.info(), heuristic: cfg.heuristic, walks_explored: 0, time_ms: 0 };
            let seq = concretize(model, script, &g.program, info).map_err(|e| e.to_string())?;
            Ok((spec, Some(seq.transactions)))
        }
        _ => Ok((spec, None)),
    }
}

/// Bounds that contain the engine's own sequence, when it has one.
fn bounds_around(txs: Option<&[Transaction]>) -> SearchBounds {
    let mut b = SearchBounds::default();
    b.args.extend([9u64, 11, 255].map(U256::from));
    let Some(txs) = txs else { return b };
    for tx in txs {
        b.args.extend(&tx.args);
        b.callers.push(tx.caller);
        b.values.push(tx.value);
        b.timestamps.extend(tx.timestamp);
    }
    b.max_calls = b.max_calls.max(txs.len() - 1);
    let dedup = |v: &mut Vec<U256>| *v = v.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    dedup(&mut b.args);
    dedup(&mut b.values);
    dedup(&mut b.timestamps);
    b.callers = b.callers.iter().copied().collect::<BTreeSet<Account>>().into_iter().collect();
    b
}

fn exhaustive_agreement() -> Result<String, String> {
    let mut names: Vec<&str> = FOUND.to_vec();
    names.push("contradiction");
    let (mut found, mut not_found) = (0, 0);
    for name in names {
        let src = source(name);
        let (spec, engine) = engine_sequence(&src)?;
        let bounds = bounds_around(engine.as_deref());
        let g = graph(&src);
        let replayer = Replayer::new(&g.program).with_target(&spec).map_err(|e| e.to_string())?;
        let brute = exhaustive_search(&g.program, &replayer, &bounds).map_err(|e| e.to_string())?;
        match (&engine, &brute) {
            (Some(_), Some(_)) => found += 1,
            (None, None) => not_found += 1,
            _ => {
                return Err(format!(
                    "{name}: engine {}, exhaustive search {}",
                    if engine.is_some() { "found" } else { "not found" },
                    if brute.is_some() { "found" } else { "not found" }
                ))
            }
        }
    }
    Ok(format!("agree on {found} found and {not_found} not found"))
}

fn reachable(f: &IrFunction) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([IrFunction::ENTRY]);
    let mut stack = vec![IrFunction::ENTRY];
    while let Some(i) = stack.pop() {
        for t in f.nodes[i].succ.targets() {
            if seen.insert(t) {
                stack.push(t);
            }
        }
    }
    seen
}

/// The CFG+ edge set, rebuilt from the IR successor lists.
fn expected_edges(g: &CfgPlus) -> Result<(usize, BTreeSet<(NodeId, NodeId)>), String> {
    let mut nodes = 0;
    let mut edges = BTreeSet::new();
    for (func, f) in g.program.transaction_functions() {
        let live = reachable(f);
        nodes += live.len();
        let id = |i: usize| g.node_of(func, i).ok_or_else(|| format!("{func:?} instruction {i} has no node"));
        for &i in &live {
            for t in f.nodes[i].succ.targets() {
                edges.insert((id(i)?, id(t)?));
            }
        }
        let (entry, exit) = (id(IrFunction::ENTRY)?, id(f.exit)?);
        match func {
            FuncRef::Constructor => {
                edges.insert((g.start, entry));
                edges.insert((exit, g.constructed));
            }
            FuncRef::Public(_) => {
                edges.insert((g.constructed, entry));
                edges.insert((exit, g.tx_processed));
                if let Some(r) = f.revert.filter(|r| live.contains(r)) {
                    edges.insert((id(r)?, g.tx_processed));
                }
            }
        }
    }
    edges.insert((g.tx_processed, g.constructed));
    edges.insert((g.tx_processed, g.end));
    Ok((nodes, edges))
}

fn cfg_structure() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut names: Vec<&str> = FOUND.to_vec();
    names.extend(["contradiction", "mutant_killing"]);
    for name in &names {
        let src = source(name);
        let g = graph(&src);
        let (nodes, edges) = expected_edges(&g)?;
        ensure(g.node_count() == nodes + 4, || format!("{name}: {} nodes, expected {}", g.node_count(), nodes + 4))?;
        ensure(g.graph.edge_set() == edges, || format!("{name}: edge set differs"))?;
        ensure(to_dot(&g) == to_dot(&graph(&src)), || format!("{name}: DOT differs between builds"))?;

        let path = corpus(&format!("{name}.msol"));
        let dots: Vec<Vec<u8>> = (0..2)
            .map(|i| {
                let dot = dir.path().join(format!("{name}{i}.dot"));
                backreach(&[
                    "--no-replay-check",
                    "--max-walks",
                    "1",
                    "--emit-dot",
                    dot.to_str().unwrap(),
                    path.to_str().unwrap(),
                ]);
                fs::read(dot).unwrap_or_default()
            })
            .collect();
        ensure(!dots[0].is_empty() && dots[0] == dots[1], || format!("{name}: emitted DOT differs"))?;
    }
    Ok(format!("{} contracts: node count, edge set and DOT bytes match", names.len()))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    let mut artifact = |tag: &str, args: &[&str]| -> Result<Vec<u8>, String> {
        runs += 1;
        let out = dir.path().join(format!("{tag}-{runs}.json"));
        let mut full = vec!["--out", out.to_str().unwrap()];
        full.extend(args);
        backreach(&full);
        fs::read(&out).map_err(|e| format!("{tag}: {e}"))
    };
    let mut compared = 0;
    for name in FOUND {
        let path = corpus(&format!("{name}.msol"));
        let first = artifact(name, &[path.to_str().unwrap()])?;
        let second = artifact(name, &[path.to_str().unwrap()])?;
        ensure(first == second, || format!("{name}: artifacts differ"))?;
        compared += 1;
    }
    let mutants = corpus("mutant_killing.mutants.json");
    let target = corpus("mutant_killing.msol");
    let args = ["--mutants", mutants.to_str().unwrap(), target.to_str().unwrap()];
    ensure(artifact("mutants", &args)? == artifact("mutants", &args)?, || "mutant reports differ".into())?;
    Ok(format!("{} artifact pairs byte-identical", compared + 1))
}
