//! All-pairs shortest path lengths over the reversed graph, by edge count.

use std::collections::VecDeque;

use crate::cfg::{NodeId, ReversedView};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    n: usize,
    /// Row-major, `u32::MAX` for unreachable.
    dist: Vec<u32>,
}

impl DistanceTable {
    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Edges on a shortest path from `from` to `to`, `None` if there is none.
    pub fn get(&self, from: NodeId, to: NodeId) -> Option<u32> {
        let d = self.dist[from.index() * self.n + to.index()];
        (d != u32::MAX).then_some(d)
    }
}

/// One breadth-first search per source. Unit edge weights make this
/// equivalent to Floyd-Warshall at a fraction of the cost.
pub fn precompute_distances(rv: &ReversedView) -> DistanceTable {
    let n = rv.graph.node_count();
    let mut dist = vec![u32::MAX; n * n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in rv.neighbors(NodeId(u as u32)) {
                if row[v.index()] == u32::MAX {
                    row[v.index()] = row[u] + 1;
                    queue.push_back(v.index());
                }
            }
        }
    }
    DistanceTable { n, dist }
}
