//! Backward search for a satisfiable walk from a target node to `start`.
//!
//! The search keeps a tree of walk prefixes rooted at the target. Every
//! (prefix, neighbour) pair is scored once when the prefix is added; the
//! cheapest pair across the whole tree is extended next.

mod distance;
mod heuristic;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::cfg::{CfgPlus, NodeId, NodeKind, ReversedView};

pub use distance::{precompute_distances, DistanceTable};
pub use heuristic::{Cost, FloydWarshall, Heuristic, HeuristicContext, HeuristicRegistry, StateAccess, StateVar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SatStatus {
    Unknown,
    Sat,
    Unsat,
}

/// Nodes from the target back toward `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<NodeId>,
    pub status: SatStatus,
}

impl Walk {
    pub fn target(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn is_complete(&self, g: &CfgPlus) -> bool {
        self.nodes.last() == Some(&g.start)
    }

    /// Start first.
    pub fn execution_order(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().rev().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeNodeId(pub u32);

#[derive(Debug, Clone)]
struct TreeNode {
    node: NodeId,
    parent: Option<TreeNodeId>,
    depth: u32,
    status: SatStatus,
    /// Cleared when the prefix is unsatisfiable.
    extendable: bool,
}

/// Prefix tree of walks. Node ids grow in creation order.
#[derive(Debug, Clone, Default)]
pub struct WalkTree {
    nodes: Vec<TreeNode>,
    roots: Vec<TreeNodeId>,
}

impl WalkTree {
    pub fn add_root(&mut self, node: NodeId) -> TreeNodeId {
        let id = self.push(TreeNode { node, parent: None, depth: 0, status: SatStatus::Unknown, extendable: true });
        self.roots.push(id);
        id
    }

    pub fn extend(&mut self, leaf: TreeNodeId, node: NodeId) -> TreeNodeId {
        let depth = self.depth(leaf) + 1;
        self.push(TreeNode { node, parent: Some(leaf), depth, status: SatStatus::Unknown, extendable: true })
    }

    fn push(&mut self, n: TreeNode) -> TreeNodeId {
        self.nodes.push(n);
        TreeNodeId(self.nodes.len() as u32 - 1)
    }

    pub fn do_not_continue(&mut self, id: TreeNodeId) {
        self.nodes[id.0 as usize].extendable = false;
    }

    pub fn is_extendable(&self, id: TreeNodeId) -> bool {
        self.nodes[id.0 as usize].extendable
    }

    pub fn set_status(&mut self, id: TreeNodeId, status: SatStatus) {
        self.nodes[id.0 as usize].status = status;
    }

    pub fn status(&self, id: TreeNodeId) -> SatStatus {
        self.nodes[id.0 as usize].status
    }

    pub fn node(&self, id: TreeNodeId) -> NodeId {
        self.nodes[id.0 as usize].node
    }

    pub fn parent(&self, id: TreeNodeId) -> Option<TreeNodeId> {
        self.nodes[id.0 as usize].parent
    }

    /// Edges from the root.
    pub fn depth(&self, id: TreeNodeId) -> u32 {
        self.nodes[id.0 as usize].depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[TreeNodeId] {
        &self.roots
    }

    /// Graph nodes from the root to `id`, target first.
    pub fn walk(&self, id: TreeNodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.depth(id) as usize + 1);
        let mut cur = Some(id);
        while let Some(t) = cur {
            out.push(self.node(t));
            cur = self.parent(t);
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Maximum node count of a walk.
    pub max_walk_len: usize,
    /// Maximum number of solver submissions.
    pub max_walks: u64,
    pub timeout: Duration,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_walk_len: 400, max_walks: 100_000, timeout: Duration::from_secs(300) }
    }
}

/// When prefixes are submitted to the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckMode {
    /// After every extension.
    #[default]
    Eager,
    /// Only when the walk reaches a transaction boundary or `start`.
    Lazy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict<W> {
    Sat(W),
    Unsat,
    Unknown(String),
}

/// Decides satisfiability of a walk prefix (target first).
pub trait WalkChecker {
    type Witness;
    type Error;
    fn check(&mut self, walk: &[NodeId]) -> Result<Verdict<Self::Witness>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NotFoundReason {
    /// No extendable prefix is left.
    Exhausted,
    WalkBudget,
    Timeout,
}

impl NotFoundReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NotFoundReason::Exhausted => "search space exhausted",
            NotFoundReason::WalkBudget => "walk budget reached",
            NotFoundReason::Timeout => "timeout reached",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ExploreStats {
    /// Solver submissions.
    pub walks_explored: u64,
    pub tree_nodes: usize,
    pub unsat: u64,
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome<W> {
    Found { walk: Walk, witness: W },
    NotFound(NotFoundReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exploration<W> {
    pub outcome: Outcome<W>,
    pub stats: ExploreStats,
}

/// Heap entry; smallest key is extended first.
type Candidate = Reverse<(Cost, NodeId, Reverse<u32>, TreeNodeId)>;

pub struct Search<'a> {
    g: &'a CfgPlus,
    rv: ReversedView,
    roots: BTreeSet<NodeId>,
    heuristic: &'a dyn Heuristic,
    limits: Limits,
    mode: CheckMode,
}

impl<'a> Search<'a> {
    /// `roots` are the target nodes. Earlier transactions may pass through
    /// them; only the walk's end is the arrival that counts.
    pub fn new(
        g: &'a CfgPlus,
        roots: &[NodeId],
        heuristic: &'a dyn Heuristic,
        limits: Limits,
        mode: CheckMode,
    ) -> Self {
        Search { g, rv: crate::cfg::reverse(g), roots: roots.iter().copied().collect(), heuristic, limits, mode }
    }

    fn needs_check(&self, node: NodeId) -> bool {
        match self.mode {
            CheckMode::Eager => true,
            CheckMode::Lazy => !matches!(self.g.kind(node), NodeKind::Instr { .. }),
        }
    }

    fn push_options(&self, tree: &WalkTree, leaf: TreeNodeId, heap: &mut BinaryHeap<Candidate>) {
        if tree.depth(leaf) as usize + 2 > self.limits.max_walk_len {
            return;
        }
        let depth = tree.depth(leaf);
        for &(option, _) in self.rv.neighbors(tree.node(leaf)) {
            let cost = self.heuristic.cost(tree, leaf, option);
            heap.push(Reverse((cost, option, Reverse(depth), leaf)));
        }
    }

    pub fn run<C: WalkChecker>(&self, checker: &mut C) -> Result<(Exploration<C::Witness>, WalkTree), C::Error> {
        let started = Instant::now();
        let mut tree = WalkTree::default();
        let mut heap = BinaryHeap::new();
        let mut stats = ExploreStats::default();

        let roots: Vec<NodeId> = self.roots.iter().copied().collect();
        let mut pending_roots: Vec<TreeNodeId> = roots.iter().map(|&r| tree.add_root(r)).collect();
        pending_roots.reverse();

        let finish = |outcome, mut stats: ExploreStats, tree: WalkTree| {
            stats.tree_nodes = tree.len();
            Ok((Exploration { outcome, stats }, tree))
        };

        loop {
            if started.elapsed() >= self.limits.timeout {
                return finish(Outcome::NotFound(NotFoundReason::Timeout), stats, tree);
            }
            let id = match pending_roots.pop() {
                Some(r) => r,
                None => {
                    let Some(Reverse((_, option, _, leaf))) = heap.pop() else {
                        return finish(Outcome::NotFound(NotFoundReason::Exhausted), stats, tree);
                    };
                    tree.extend(leaf, option)
                }
            };
            let node = tree.node(id);
            if self.needs_check(node) {
                if stats.walks_explored >= self.limits.max_walks {
                    return finish(Outcome::NotFound(NotFoundReason::WalkBudget), stats, tree);
                }
                stats.walks_explored += 1;
                match checker.check(&tree.walk(id))? {
                    Verdict::Sat(witness) => {
                        tree.set_status(id, SatStatus::Sat);
                        if node == self.g.start {
                            let walk = Walk { nodes: tree.walk(id), status: SatStatus::Sat };
                            return finish(Outcome::Found { walk, witness }, stats, tree);
                        }
                    }
                    Verdict::Unsat => {
                        stats.unsat += 1;
                        tree.set_status(id, SatStatus::Unsat);
                        tree.do_not_continue(id);
                        continue;
                    }
                    Verdict::Unknown(_) => {
                        stats.unknown += 1;
                        tree.do_not_continue(id);
                        continue;
                    }
                }
            }
            self.push_options(&tree, id, &mut heap);
        }
    }
}

/// Runs the search with a fresh tree and returns the first satisfiable
/// complete walk in heuristic order.
pub fn find_minimal_satisfiable_walk<C: WalkChecker>(
    g: &CfgPlus,
    roots: &[NodeId],
    heuristic: &dyn Heuristic,
    limits: Limits,
    mode: CheckMode,
    checker: &mut C,
) -> Result<Exploration<C::Witness>, C::Error> {
    Search::new(g, roots, heuristic, limits, mode).run(checker).map(|(e, _)| e)
}
