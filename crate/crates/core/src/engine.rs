//! Wires target resolution, the walk search and the solver together.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::rc::Rc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cfg::{reverse, CfgPlus, NodeId, NodeKind};
use crate::concretizer::{concretize, ConcretizeError, RunInfo, TransactionSequence};
use crate::encoder::{
    encode, ssa_number, EncodeError, Model, SatResult, SolverConfig, SolverError, SolverSession, SsaScript,
};
use crate::explorer::{
    precompute_distances, CheckMode, ExploreStats, HeuristicContext, HeuristicRegistry, Limits, NotFoundReason,
    Outcome, Search, StateAccess, Verdict, Walk, WalkChecker,
};
use crate::frontend::{FrontendError, TargetSpec};
use crate::ir::{resolve_bool, IrError, NodeNames, StateId, TExpr, VarRef};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Concretize(#[from] ConcretizeError),
    #[error("line {0}: no instruction on the target line")]
    NoTargetNode(u32),
    #[error("unknown heuristic `{0}`")]
    UnknownHeuristic(String),
    #[error("cannot write `{path}`: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// A target resolved against the graph: one root per body copy of the
/// line, each with the safety condition in that copy's scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedTarget {
    pub spec: TargetSpec,
    pub roots: BTreeMap<NodeId, Option<TExpr>>,
}

impl ResolvedTarget {
    pub fn root_nodes(&self) -> Vec<NodeId> {
        self.roots.keys().copied().collect()
    }

    pub fn safety_state_reads(&self) -> BTreeSet<StateId> {
        let mut out = Vec::new();
        for e in self.roots.values().flatten() {
            e.reads(&mut out);
        }
        out.into_iter()
            .filter_map(|v| match v {
                VarRef::State(s) => Some(s),
                VarRef::Local(_) => None,
            })
            .collect()
    }
}

pub fn resolve_target(g: &CfgPlus, spec: &TargetSpec) -> Result<ResolvedTarget, EngineError> {
    let nodes = g.nodes_for_line(spec.line);
    if nodes.is_empty() {
        return Err(EngineError::NoTargetNode(spec.line));
    }
    let mut roots = BTreeMap::new();
    for n in nodes {
        let NodeKind::Instr { instr, .. } = g.kind(n) else { unreachable!("line nodes are instructions") };
        let (_, f, _) = g.ir(n).unwrap();
        let safety = match &spec.safety {
            Some(s) => Some(resolve_bool(&s.expr, &NodeNames::new(&g.program, f, instr))?),
            None => None,
        };
        roots.insert(n, safety);
    }
    Ok(ResolvedTarget { spec: spec.clone(), roots })
}

/// Checks walks by encoding them and running the external solver.
pub struct SmtChecker<'a> {
    g: &'a CfgPlus,
    target: &'a ResolvedTarget,
    solver: SolverSession,
    emit_smt: Option<PathBuf>,
    emitted: usize,
}

impl<'a> SmtChecker<'a> {
    pub fn new(g: &'a CfgPlus, target: &'a ResolvedTarget, solver: SolverConfig, emit_smt: Option<PathBuf>) -> Self {
        SmtChecker { g, target, solver: SolverSession::new(solver), emit_smt, emitted: 0 }
    }
}

impl WalkChecker for SmtChecker<'_> {
    type Witness = (SsaScript, Model);
    type Error = EngineError;

    fn check(&mut self, walk: &[NodeId]) -> Result<Verdict<Self::Witness>, EngineError> {
        let safety = self.target.roots.get(&walk[0]).and_then(Option::as_ref);
        let script = ssa_number(self.g, walk, safety)?;
        let smt = encode(&script, &self.g.program);
        if let Some(dir) = &self.emit_smt {
            self.emitted += 1;
            let path = dir.join(format!("{:06}.smt2", self.emitted));
            fs::write(&path, &smt.text).map_err(|e| EngineError::Io { path, reason: e.to_string() })?;
        }
        Ok(match self.solver.check(&smt)? {
            SatResult::Sat(model) => Verdict::Sat((script, model)),
            SatResult::Unsat => Verdict::Unsat,
            SatResult::Unknown(reason) => Verdict::Unknown(reason),
        })
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub heuristic: String,
    pub solver: SolverConfig,
    pub limits: Limits,
    pub mode: CheckMode,
    pub emit_smt: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            heuristic: "floyd-warshall".into(),
            solver: SolverConfig::default(),
            limits: Limits::default(),
            mode: CheckMode::Eager,
            emit_smt: None,
        }
    }
}

// One per search, so the size difference does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum EngineOutcome {
    Found { walk: Walk, script: SsaScript, model: Model },
    NotFound(NotFoundReason),
}

#[derive(Debug, Clone)]
pub struct EngineResult {
    pub outcome: EngineOutcome,
    pub stats: ExploreStats,
    pub elapsed: Duration,
}

pub fn heuristic_context(g: &CfgPlus, target: &ResolvedTarget) -> HeuristicContext {
    HeuristicContext {
        start: g.start,
        distances: Rc::new(precompute_distances(&reverse(g))),
        access: Rc::new(StateAccess::new(g)),
        safety_reads: target.safety_state_reads(),
    }
}

/// Searches for a satisfiable walk to `target` with the given registry.
pub fn run_search(
    g: &CfgPlus,
    target: &ResolvedTarget,
    cfg: &EngineConfig,
    registry: &HeuristicRegistry,
) -> Result<EngineResult, EngineError> {
    let started = Instant::now();
    let heuristic = registry
        .create(&cfg.heuristic, heuristic_context(g, target))
        .ok_or_else(|| EngineError::UnknownHeuristic(cfg.heuristic.clone()))?;
    if let Some(dir) = &cfg.emit_smt {
        fs::create_dir_all(dir).map_err(|e| EngineError::Io { path: dir.clone(), reason: e.to_string() })?;
    }
    let mut checker = SmtChecker::new(g, target, cfg.solver.clone(), cfg.emit_smt.clone());
    let roots = target.root_nodes();
    let (exploration, _) = Search::new(g, &roots, heuristic.as_ref(), cfg.limits, cfg.mode).run(&mut checker)?;
    let outcome = match exploration.outcome {
        Outcome::Found { walk, witness: (script, model) } => EngineOutcome::Found { walk, script, model },
        Outcome::NotFound(r) => EngineOutcome::NotFound(r),
    };
    Ok(EngineResult { outcome, stats: exploration.stats, elapsed: started.elapsed() })
}

/// Search result with the walk already turned into transactions.
#[derive(Debug, Clone)]
pub struct Solution {
    /// `Err` carries why the search stopped without a walk.
    pub sequence: Result<TransactionSequence, NotFoundReason>,
    pub stats: ExploreStats,
    pub elapsed: Duration,
}

/// Resolves `spec`, searches and concretizes.
pub fn solve(
    g: &CfgPlus,
    spec: &TargetSpec,
    cfg: &EngineConfig,
    registry: &HeuristicRegistry,
) -> Result<Solution, EngineError> {
    let target = resolve_target(g, spec)?;
    let result = run_search(g, &target, cfg, registry)?;
    let sequence = match &result.outcome {
        EngineOutcome::Found { script, model, .. } => {
            let info = RunInfo {
                target: spec.info(),
                heuristic: cfg.heuristic.clone(),
                walks_explored: result.stats.walks_explored,
                time_ms: result.elapsed.as_millis() as u64,
            };
            Ok(concretize(model, script, &g.program, info)?)
        }
        EngineOutcome::NotFound(reason) => Err(*reason),
    };
    Ok(Solution { sequence, stats: result.stats, elapsed: result.elapsed })
}
