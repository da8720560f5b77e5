//! Per-function control-flow graphs and the whole-contract graph that
//! chains deployment and transactions through four auxiliary nodes.

mod dot;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

pub use dot::to_dot;

use crate::ir::{FuncRef, Instr, InstrId, IrFunction, IrProgram, Node};

/// Graph over one function's IR nodes. Unreachable nodes are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    /// Reachable nodes in IR order.
    pub nodes: Vec<InstrId>,
    pub edges: Vec<(InstrId, InstrId)>,
    pub entry: InstrId,
    pub exit: InstrId,
    /// Present when some path aborts.
    pub revert: Option<InstrId>,
}

pub fn build_cfg(f: &IrFunction) -> Cfg {
    let mut seen = vec![false; f.nodes.len()];
    let mut queue = VecDeque::from([IrFunction::ENTRY]);
    seen[IrFunction::ENTRY] = true;
    while let Some(n) = queue.pop_front() {
        for t in f.nodes[n].succ.targets() {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    let nodes: Vec<InstrId> = (0..f.nodes.len()).filter(|&i| seen[i]).collect();
    let mut edges = Vec::new();
    for &n in &nodes {
        for t in f.nodes[n].succ.targets() {
            if !edges.contains(&(n, t)) {
                edges.push((n, t));
            }
        }
    }
    Cfg { nodes, edges, entry: IrFunction::ENTRY, exit: f.exit, revert: f.revert.filter(|r| seen[*r]) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Start,
    End,
    Constructed,
    TxProcessed,
    Instr { func: FuncRef, instr: InstrId },
}

impl NodeKind {
    pub fn is_auxiliary(self) -> bool {
        !matches!(self, NodeKind::Instr { .. })
    }

    pub fn aux_name(self) -> Option<&'static str> {
        match self {
            NodeKind::Start => Some("start"),
            NodeKind::End => Some("end"),
            NodeKind::Constructed => Some("constructed"),
            NodeKind::TxProcessed => Some("tx_processed"),
            NodeKind::Instr { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Normal,
    /// From a revert sink to `tx_processed`: the transaction rolled back.
    Aborted,
}

/// Adjacency lists over `NodeId`s, neighbours sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    out: Vec<Vec<(NodeId, EdgeKind)>>,
}

impl Digraph {
    pub fn with_nodes(n: usize) -> Self {
        Digraph { out: vec![Vec::new(); n] }
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId, kind: EdgeKind) {
        let list = &mut self.out[a.index()];
        if !list.iter().any(|(t, _)| *t == b) {
            list.push((b, kind));
            list.sort();
        }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, EdgeKind)] {
        &self.out[n.index()]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.out[a.index()].iter().any(|(t, _)| *t == b)
    }

    pub fn edge_kind(&self, a: NodeId, b: NodeId) -> Option<EdgeKind> {
        self.out[a.index()].iter().find(|(t, _)| *t == b).map(|(_, k)| *k)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgeKind)> + '_ {
        self.out.iter().enumerate().flat_map(|(a, l)| l.iter().map(move |(b, k)| (NodeId(a as u32), *b, *k)))
    }

    pub fn edge_set(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.edges().map(|(a, b, _)| (a, b)).collect()
    }

    pub fn in_degree(&self, n: NodeId) -> usize {
        self.out.iter().filter(|l| l.iter().any(|(t, _)| *t == n)).count()
    }

    pub fn transpose(&self) -> Digraph {
        let mut g = Digraph::with_nodes(self.out.len());
        for (a, b, k) in self.edges() {
            g.add_edge(b, a, k);
        }
        g
    }

    /// True when consecutive nodes of `path` are joined by edges.
    pub fn is_path(&self, path: &[NodeId]) -> bool {
        path.windows(2).all(|w| self.has_edge(w[0], w[1]))
    }
}

/// The contract-level graph: constructor and public-function CFGs joined
/// by `start`, `constructed`, `tx_processed` and `end`.
#[derive(Debug, Clone)]
pub struct CfgPlus {
    pub program: IrProgram,
    pub kinds: Vec<NodeKind>,
    pub graph: Digraph,
    pub cfgs: Vec<(FuncRef, Cfg)>,
    pub start: NodeId,
    pub end: NodeId,
    pub constructed: NodeId,
    pub tx_processed: NodeId,
    index: HashMap<(FuncRef, InstrId), NodeId>,
}

pub fn build_cfg_plus(program: IrProgram) -> CfgPlus {
    let mut kinds = vec![NodeKind::Start, NodeKind::End, NodeKind::Constructed, NodeKind::TxProcessed];
    let (start, end, constructed, tx_processed) = (NodeId(0), NodeId(1), NodeId(2), NodeId(3));
    let mut index = HashMap::new();
    let mut cfgs = Vec::new();
    for (fref, f) in program.transaction_functions() {
        let cfg = build_cfg(f);
        for &n in &cfg.nodes {
            index.insert((fref, n), NodeId(kinds.len() as u32));
            kinds.push(NodeKind::Instr { func: fref, instr: n });
        }
        cfgs.push((fref, cfg));
    }

    let mut graph = Digraph::with_nodes(kinds.len());
    let id = |f: FuncRef, n: InstrId| index[&(f, n)];
    for (fref, cfg) in &cfgs {
        for &(a, b) in &cfg.edges {
            graph.add_edge(id(*fref, a), id(*fref, b), EdgeKind::Normal);
        }
        let entry = id(*fref, cfg.entry);
        let exit = id(*fref, cfg.exit);
        match fref {
            FuncRef::Constructor => {
                graph.add_edge(start, entry, EdgeKind::Normal);
                graph.add_edge(exit, constructed, EdgeKind::Normal);
            }
            FuncRef::Public(_) => {
                graph.add_edge(constructed, entry, EdgeKind::Normal);
                graph.add_edge(exit, tx_processed, EdgeKind::Normal);
                if let Some(r) = cfg.revert {
                    graph.add_edge(id(*fref, r), tx_processed, EdgeKind::Aborted);
                }
            }
        }
    }
    graph.add_edge(tx_processed, constructed, EdgeKind::Normal);
    graph.add_edge(tx_processed, end, EdgeKind::Normal);

    CfgPlus { program, kinds, graph, cfgs, start, end, constructed, tx_processed, index }
}

impl CfgPlus {
    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.kinds.len() as u32).map(NodeId)
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n.index()]
    }

    pub fn node_of(&self, func: FuncRef, instr: InstrId) -> Option<NodeId> {
        self.index.get(&(func, instr)).copied()
    }

    /// The IR node behind a CFG+ node, with its function.
    pub fn ir(&self, n: NodeId) -> Option<(FuncRef, &IrFunction, &Node)> {
        match self.kind(n) {
            NodeKind::Instr { func, instr } => {
                let f = self.program.func(func);
                Some((func, f, &f.nodes[instr]))
            }
            _ => None,
        }
    }

    pub fn func_of(&self, n: NodeId) -> Option<FuncRef> {
        match self.kind(n) {
            NodeKind::Instr { func, .. } => Some(func),
            _ => None,
        }
    }

    pub fn line(&self, n: NodeId) -> Option<u32> {
        self.ir(n).map(|(_, _, node)| node.line).filter(|l| *l > 0)
    }

    pub fn cfg(&self, f: FuncRef) -> &Cfg {
        &self.cfgs.iter().find(|(r, _)| *r == f).expect("function in graph").1
    }

    pub fn entry(&self, f: FuncRef) -> NodeId {
        self.index[&(f, IrFunction::ENTRY)]
    }

    pub fn is_revert_sink(&self, n: NodeId) -> bool {
        matches!(self.ir(n), Some((_, _, node)) if node.instr == Instr::RevertSink)
    }

    /// CFG+ nodes that stand for a source line: the first IR node of the
    /// line in each function body copy.
    pub fn nodes_for_line(&self, line: u32) -> Vec<NodeId> {
        self.program.nodes_on_line(line).into_iter().filter_map(|(f, i)| self.node_of(f, i)).collect()
    }

    /// Short human-readable description used in DOT labels and logs.
    pub fn label(&self, n: NodeId) -> String {
        match self.ir(n) {
            Some((_, f, node)) => self.program.render_node(f, node),
            None => self.kind(n).aux_name().unwrap().to_string(),
        }
    }
}

/// The transposed CFG+, walked backwards from a target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReversedView {
    pub graph: Digraph,
}

pub fn reverse(g: &CfgPlus) -> ReversedView {
    ReversedView { graph: g.graph.transpose() }
}

impl ReversedView {
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, EdgeKind)] {
        self.graph.neighbors(n)
    }
}
