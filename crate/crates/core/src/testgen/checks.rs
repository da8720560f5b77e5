//! Scans over numbered scripts and a model-versus-replay comparison,
//! shared by the property and acceptance suites.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::cfg::{CfgPlus, NodeKind};
use crate::concretizer::{concretize, RunInfo};
use crate::encoder::{encode, ssa_number, Clause, SatResult, SolverSession, SsaScript, Sym, Term};
use crate::engine::resolve_target;
use crate::frontend::TargetSpec;
use crate::oracle::Replayer;
use crate::types::U256;

use super::shortest_walk;

/// Every defined symbol is read only by later clauses.
pub fn defined_before_use(script: &SsaScript) -> Result<(), String> {
    let defs: HashMap<Sym, usize> = script
        .clauses
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match c {
            Clause::Define { sym, .. } => Some((*sym, i)),
            _ => None,
        })
        .collect();
    for (i, c) in script.clauses.iter().enumerate() {
        for t in c.terms() {
            let mut bad = None;
            t.walk(&mut |t| {
                if let Term::Sym(s) = t {
                    if defs.get(s).is_some_and(|d| *d >= i) {
                        bad = Some(*s);
                    }
                }
            });
            if let Some(s) = bad {
                return Err(format!("clause {i} reads {s:?} before its definition"));
            }
        }
    }
    Ok(())
}

/// Every symbol and map generation is written once, and versions of the
/// same variable appear in increasing order.
pub fn check_numbering(script: &SsaScript) -> Result<(), String> {
    let mut seen = HashSet::new();
    let mut last_state = BTreeMap::new();
    let mut last_local = BTreeMap::new();
    let mut last_gen = BTreeMap::new();
    for c in &script.clauses {
        match c {
            Clause::Define { sym, .. } => {
                if !seen.insert(*sym) {
                    return Err(format!("{sym:?} defined twice"));
                }
                let (prev, ver) = match *sym {
                    Sym::State { var, ver } => (last_state.insert(var, ver), ver),
                    Sym::Local { tx, var, ver } => (last_local.insert((tx, var), ver), ver),
                    _ => continue,
                };
                if let Some(prev) = prev.filter(|p| *p >= ver) {
                    return Err(format!("{sym:?} after version {prev}"));
                }
            }
            Clause::MapStore { new, old, .. } => {
                if new.var != old.var || new.gen <= old.gen {
                    return Err(format!("store {old} -> {new}"));
                }
                if last_gen.insert(new.var, new.gen).is_some_and(|prev| prev >= new.gen) {
                    return Err(format!("generation {new} out of order"));
                }
            }
            Clause::MapZero(_) | Clause::Assume(_) => {}
        }
    }
    defined_before_use(script)
}

/// What one model-versus-replay comparison covered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Compared {
    pub definitions: usize,
    pub cells: usize,
}

/// Solves the shortest walk to `spec` with its safety condition, replays
/// the concretized model and checks every step-tagged definition against
/// the value the interpreter wrote at the same node, and the newest map
/// generations against storage at the target. `Ok(None)` if the walk is
/// unsatisfiable.
pub fn model_matches_replay(
    g: &CfgPlus,
    spec: &TargetSpec,
    session: &mut SolverSession,
) -> Result<Option<Compared>, String> {
    let target = resolve_target(g, spec).map_err(|e| e.to_string())?;
    let (root, safety) = target.roots.iter().next().expect("resolved targets have a root");
    let walk = shortest_walk(g, *root).ok_or("target unreachable in the graph")?;
    let script = ssa_number(g, &walk, safety.as_ref()).map_err(|e| e.to_string())?;
    let model = match session.check(&encode(&script, &g.program)).map_err(|e| e.to_string())? {
        SatResult::Sat(m) => m,
        SatResult::Unsat | SatResult::Unknown(_) => return Ok(None),
    };
    let info = RunInfo { target: spec.info(), heuristic: "shortest".into(), walks_explored: 1, time_ms: 0 };
    let seq = concretize(&model, &script, &g.program, info).map_err(|e| e.to_string())?;
    let report = Replayer::new(&g.program)
        .record_steps()
        .with_target(spec)
        .and_then(|r| r.run(&seq.transactions))
        .map_err(|e| e.to_string())?;
    if !report.confirmed() {
        return Err(format!("replay does not confirm the model: {:?}", report.outcomes));
    }

    let mut replayed: HashMap<_, Vec<_>> = HashMap::new();
    for r in &report.steps {
        replayed.entry((r.tx, r.func, r.instr)).or_default().push(r.value);
    }
    let tx_of = |step: usize| script.txs.iter().rposition(|t| t.first_step <= step).unwrap();
    let mut compared = Compared::default();
    for c in &script.clauses {
        let Clause::Define { sym, step: Some(step), .. } = c else { continue };
        let node = script.steps[*step];
        let NodeKind::Instr { func, instr } = g.kind(node) else {
            return Err(format!("{sym:?} defined at a non-instruction node"));
        };
        let tx = tx_of(*step);
        let occurrence = script.steps[script.txs[tx].first_step..*step].iter().filter(|n| **n == node).count();
        let actual = replayed.get(&(tx, func, instr)).and_then(|v| v.get(occurrence)).copied().flatten();
        let expected = model.get(*sym).ok_or_else(|| format!("{sym:?} missing from the model"))?;
        if actual != Some(expected) {
            return Err(format!("step {step} ({sym:?}): model {expected:?}, replay {actual:?}"));
        }
        compared.definitions += 1;
    }

    let mut newest = BTreeMap::new();
    for (map, _) in &script.maps {
        newest.entry(map.var).and_modify(|g: &mut u32| *g = (*g).max(map.gen)).or_insert(map.gen);
    }
    for (var, gen) in newest {
        let name = &g.program.state_vars[var.0 as usize].name;
        let stored = &report.final_storage.tables[name].0;
        let cells = model.tables.iter().find(|(m, _)| m.var == var && m.gen == gen).map(|(_, c)| c);
        for (key, value) in cells.into_iter().flatten() {
            let actual = stored.get(key).copied().unwrap_or(U256::ZERO);
            if actual != *value {
                return Err(format!("{name}[{key}]: model {value}, replay {actual}"));
            }
            compared.cells += 1;
        }
    }
    Ok(Some(compared))
}
