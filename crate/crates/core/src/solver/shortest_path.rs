//! Dijkstra label-setting shortest paths over nonnegative arc costs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::network::{ArcId, Network, NodeId};

use super::SolveError;

/// Shortest-path tree rooted at one origin. Unreachable nodes carry
/// `f64::INFINITY` and no predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub origin: NodeId,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<ArcId>>,
}

impl ShortestPathTree {
    pub fn is_reachable(&self, node: NodeId) -> bool {
        self.dist[node].is_finite()
    }

    /// Arc sequence from the origin to `node`, or `None` when unreachable.
    pub fn path_to(&self, network: &Network, node: NodeId) -> Option<Vec<ArcId>> {
        if !self.is_reachable(node) {
            return None;
        }
        let mut arcs = Vec::new();
        let mut v = node;
        while v != self.origin {
            let a = self.pred[v]?;
            arcs.push(a);
            v = network.arcs[a].tail;
        }
        arcs.reverse();
        Some(arcs)
    }
}

#[derive(PartialEq)]
struct Label {
    dist: f64,
    node: NodeId,
}

impl Eq for Label {}

impl Ord for Label {
    // min-heap on (dist, node): lower node ids pop first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn check_costs(arc_costs: &[f64]) -> Result<(), SolveError> {
    match arc_costs
        .iter()
        .enumerate()
        .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
    {
        Some((arc, &cost)) => Err(SolveError::InvalidArcCost { arc, cost }),
        None => Ok(()),
    }
}

/// Dijkstra from `origin` using precomputed outgoing adjacency.
pub(crate) fn dijkstra(
    network: &Network,
    out_arcs: &[Vec<ArcId>],
    arc_costs: &[f64],
    origin: NodeId,
) -> ShortestPathTree {
    let n = network.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(Label {
        dist: 0.0,
        node: origin,
    });
    while let Some(Label { dist: d, node: v }) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &a in &out_arcs[v] {
            let h = network.arcs[a].head;
            let nd = d + arc_costs[a];
            // strict improvement only, so ties keep the first-found predecessor
            if nd < dist[h] {
                dist[h] = nd;
                pred[h] = Some(a);
                heap.push(Label { dist: nd, node: h });
            }
        }
    }
    ShortestPathTree { origin, dist, pred }
}

/// Shortest paths from `origin` under the given arc costs.
pub fn shortest_path(
    network: &Network,
    arc_costs: &[f64],
    origin: NodeId,
) -> Result<ShortestPathTree, SolveError> {
    if arc_costs.len() != network.arc_count() {
        return Err(SolveError::CostLength {
            expected: network.arc_count(),
            got: arc_costs.len(),
        });
    }
    if origin >= network.node_count() {
        return Err(SolveError::UnknownNode(origin));
    }
    check_costs(arc_costs)?;
    Ok(dijkstra(network, &network.out_arcs(), arc_costs, origin))
}
