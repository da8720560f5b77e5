//! Option scoring for the walk search.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use super::{DistanceTable, TreeNodeId, WalkTree};
use crate::cfg::{CfgPlus, NodeId};
use crate::ir::{FuncRef, Instr, Operand, StateId, VarRef};

/// Extended non-negative cost; `Infinite` sorts after every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cost {
    Finite(u64),
    Infinite,
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(c) => write!(f, "{c}"),
            Cost::Infinite => f.write_str("inf"),
        }
    }
}

pub trait Heuristic {
    fn name(&self) -> &str;
    /// Cost of extending `leaf` by `option`, a reversed-graph neighbour of
    /// the leaf's node. Must be deterministic.
    fn cost(&self, tree: &WalkTree, leaf: TreeNodeId, option: NodeId) -> Cost;
}

/// State variables read and written by every graph node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateAccess {
    reads: Vec<BTreeSet<StateId>>,
    writes: Vec<BTreeSet<StateId>>,
    func_writes: BTreeMap<FuncRef, BTreeSet<StateId>>,
    func: Vec<Option<FuncRef>>,
    revert: Vec<bool>,
}

impl StateAccess {
    pub fn new(g: &CfgPlus) -> Self {
        let n = g.node_count();
        let mut acc = StateAccess {
            reads: vec![BTreeSet::new(); n],
            writes: vec![BTreeSet::new(); n],
            func_writes: BTreeMap::new(),
            func: vec![None; n],
            revert: vec![false; n],
        };
        let all: BTreeSet<StateId> = (0..g.program.state_vars.len() as u32).map(StateId).collect();
        for id in g.node_ids() {
            let Some((func, _, node)) = g.ir(id) else { continue };
            let i = id.index();
            acc.func[i] = Some(func);
            acc.revert[i] = g.is_revert_sink(id);
            for op in node.instr.operands() {
                if let Operand::Var(VarRef::State(s)) = op {
                    acc.reads[i].insert(*s);
                }
            }
            match &node.instr {
                Instr::IndexRead { table, .. } => {
                    acc.reads[i].insert(*table);
                }
                Instr::IndexWrite { table, .. } => {
                    acc.writes[i].insert(*table);
                }
                _ => {}
            }
            if let Some(VarRef::State(s)) = node.instr.dest() {
                acc.writes[i].insert(s);
            }
            let fw = acc.func_writes.entry(func).or_default();
            fw.extend(acc.writes[i].iter().copied());
        }
        // Deployment zero-initialises all of storage.
        acc.func_writes.insert(FuncRef::Constructor, all);
        acc
    }

    pub fn reads(&self, n: NodeId) -> &BTreeSet<StateId> {
        &self.reads[n.index()]
    }

    pub fn writes(&self, n: NodeId) -> &BTreeSet<StateId> {
        &self.writes[n.index()]
    }

    pub fn function_writes(&self, f: FuncRef) -> Option<&BTreeSet<StateId>> {
        self.func_writes.get(&f)
    }
}

/// Inputs shared by all heuristics of one exploration.
#[derive(Clone)]
pub struct HeuristicContext {
    pub start: NodeId,
    pub distances: Rc<DistanceTable>,
    pub access: Rc<StateAccess>,
    /// State variables read by the target condition.
    pub safety_reads: BTreeSet<StateId>,
}

/// `depth(leaf) + dist(option, start)`.
pub struct FloydWarshall {
    ctx: HeuristicContext,
}

impl FloydWarshall {
    pub const NAME: &'static str = "floyd-warshall";

    pub fn new(ctx: HeuristicContext) -> Self {
        FloydWarshall { ctx }
    }
}

fn distance_cost(ctx: &HeuristicContext, tree: &WalkTree, leaf: TreeNodeId, option: NodeId) -> Cost {
    match ctx.distances.get(option, ctx.start) {
        Some(d) => Cost::Finite(tree.depth(leaf) as u64 + d as u64),
        None => Cost::Infinite,
    }
}

impl Heuristic for FloydWarshall {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn cost(&self, tree: &WalkTree, leaf: TreeNodeId, option: NodeId) -> Cost {
        distance_cost(&self.ctx, tree, leaf, option)
    }
}

/// Refuses transactions that cannot write a state variable the walk
/// still reads without a write; otherwise falls back to distance.
pub struct StateVar {
    ctx: HeuristicContext,
    pending: RefCell<HashMap<TreeNodeId, Rc<BTreeSet<StateId>>>>,
}

impl StateVar {
    pub const NAME: &'static str = "state-var";

    pub fn new(ctx: HeuristicContext) -> Self {
        StateVar { ctx, pending: RefCell::new(HashMap::new()) }
    }

    /// Variables read along the walk from the target down to `leaf` with
    /// no write between the read and the leaf.
    pub fn pending(&self, tree: &WalkTree, leaf: TreeNodeId) -> Rc<BTreeSet<StateId>> {
        if let Some(p) = self.pending.borrow().get(&leaf) {
            return p.clone();
        }
        let mut chain = vec![leaf];
        let mut base = None;
        while let Some(parent) = tree.parent(*chain.last().unwrap()) {
            if let Some(p) = self.pending.borrow().get(&parent) {
                base = Some(p.clone());
                break;
            }
            chain.push(parent);
        }
        let acc = &self.ctx.access;
        let mut cache = self.pending.borrow_mut();
        let mut current: Rc<BTreeSet<StateId>> = match base {
            Some(p) => p,
            None => {
                let root = chain.pop().unwrap();
                let mut set = self.ctx.safety_reads.clone();
                set.extend(acc.reads(tree.node(root)).iter().copied());
                let set = Rc::new(set);
                cache.insert(root, set.clone());
                set
            }
        };
        for &t in chain.iter().rev() {
            let n = tree.node(t);
            let mut next: BTreeSet<StateId> = current.difference(acc.writes(n)).copied().collect();
            next.extend(acc.reads(n).iter().copied());
            current = Rc::new(next);
            cache.insert(t, current.clone());
        }
        current
    }
}

impl Heuristic for StateVar {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn cost(&self, tree: &WalkTree, leaf: TreeNodeId, option: NodeId) -> Cost {
        let acc = &self.ctx.access;
        let pending = self.pending(tree, leaf);
        if !pending.is_empty() {
            if acc.revert[option.index()] {
                return Cost::Infinite;
            }
            let entering = acc.func[option.index()];
            if let Some(f) = entering.filter(|f| Some(*f) != acc.func[tree.node(leaf).index()]) {
                let writes = acc.function_writes(f).map(|w| !w.is_disjoint(&pending)).unwrap_or(false);
                if !writes {
                    return Cost::Infinite;
                }
            }
        }
        distance_cost(&self.ctx, tree, leaf, option)
    }
}

type Factory = Box<dyn Fn(HeuristicContext) -> Box<dyn Heuristic>>;

/// Heuristics by name. Built-ins are `floyd-warshall` and `state-var`.
pub struct HeuristicRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for HeuristicRegistry {
    fn default() -> Self {
        let mut r = HeuristicRegistry { factories: BTreeMap::new() };
        r.register(FloydWarshall::NAME, |ctx| Box::new(FloydWarshall::new(ctx)));
        r.register(StateVar::NAME, |ctx| Box::new(StateVar::new(ctx)));
        r
    }
}

impl HeuristicRegistry {
    /// Adds or replaces a heuristic.
    pub fn register(&mut self, name: &str, factory: impl Fn(HeuristicContext) -> Box<dyn Heuristic> + 'static) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(&self, name: &str, ctx: HeuristicContext) -> Option<Box<dyn Heuristic>> {
        self.factories.get(name).map(|f| f(ctx))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
