//! Dijkstra and Yen's K shortest loopless paths over the cost map.
//!
//! Paths are totally ordered by `(total_cost, switch sequence, edge sequence)`
//! so equal-cost alternatives come out in a reproducible order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use crate::linkstate::LinkState;
use crate::topology::{EdgeId, NodeId, TopologyError};

/// A loopless switch-level path annotated from the link state it was
/// computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    pub total_cost: f64,
    /// Minimum available bandwidth over the edges, bits/second. Infinite for
    /// the empty path.
    pub bottleneck_ab: f64,
    /// Sum of measured link latencies, seconds.
    pub total_latency: f64,
}

impl Path {
    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().expect("path has at least one node")
    }

    pub fn hop_count(&self) -> usize {
        self.edges.len()
    }

    /// Position of `node` on the path.
    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == node)
    }

    /// Builds a path from an edge list, annotating cost, bottleneck and
    /// latency from `state`.
    pub fn from_edges(
        state: &LinkState,
        start: NodeId,
        edges: Vec<EdgeId>,
    ) -> Result<Path, TopologyError> {
        let topo = state.topology();
        let mut nodes = vec![start];
        for e in &edges {
            let edge = topo.try_edge(*e)?;
            if edge.from != *nodes.last().unwrap() {
                return Err(TopologyError::MissingEdge(*e));
            }
            nodes.push(edge.to);
        }
        let total_cost = state
            .cost_map()
            .path_cost(&edges)
            .map_err(|_| TopologyError::MissingEdge(edges[0]))?;
        let bottleneck_ab = edges
            .iter()
            .map(|e| state.available_bw(*e))
            .fold(f64::INFINITY, f64::min);
        let total_latency = edges.iter().map(|e| state.latency(*e)).sum();
        Ok(Path {
            nodes,
            edges,
            total_cost,
            bottleneck_ab,
            total_latency,
        })
    }

    fn order(&self, other: &Path) -> Ordering {
        self.total_cost
            .total_cmp(&other.total_cost)
            .then_with(|| self.nodes.cmp(&other.nodes))
            .then_with(|| self.edges.cmp(&other.edges))
    }

    pub fn is_loopless(&self) -> bool {
        let mut seen = HashSet::new();
        self.nodes.iter().all(|n| seen.insert(*n))
    }
}

#[derive(Debug)]
struct Label {
    cost: f64,
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    // Reversed so BinaryHeap pops the smallest label first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.nodes.cmp(&self.nodes))
            .then_with(|| other.edges.cmp(&self.edges))
    }
}

fn check_switch(state: &LinkState, node: NodeId) -> Result<(), TopologyError> {
    let topo = state.topology();
    let n = topo.node(node)?;
    if !topo.is_switch(node) {
        return Err(TopologyError::NotASwitch(n.name.clone()));
    }
    Ok(())
}

/// Minimum-cost path from `src` to `dst` avoiding the excluded edges and
/// nodes. Edges with infinite cost are unusable. Returns `None` when `dst`
/// cannot be reached.
pub fn dijkstra(
    state: &LinkState,
    src: NodeId,
    dst: NodeId,
    excluded_edges: &HashSet<EdgeId>,
    excluded_nodes: &HashSet<NodeId>,
) -> Result<Option<Path>, TopologyError> {
    check_switch(state, src)?;
    check_switch(state, dst)?;
    if excluded_nodes.contains(&src) || excluded_nodes.contains(&dst) {
        return Ok(None);
    }
    let topo = state.topology();
    let costs = state.cost_map();
    let mut settled = vec![false; topo.node_count()];
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        cost: 0.0,
        nodes: vec![src],
        edges: Vec::new(),
    });
    while let Some(label) = heap.pop() {
        let here = *label.nodes.last().unwrap();
        if settled[here.index()] {
            continue;
        }
        settled[here.index()] = true;
        if here == dst {
            return Path::from_edges(state, src, label.edges).map(Some);
        }
        for &eid in topo.out_edges(here) {
            if excluded_edges.contains(&eid) || !costs.usable(eid) {
                continue;
            }
            let next = topo.edge(eid).to;
            if settled[next.index()]
                || excluded_nodes.contains(&next)
                || !topo.is_switch(next)
            {
                continue;
            }
            let mut nodes = label.nodes.clone();
            nodes.push(next);
            let mut edges = label.edges.clone();
            edges.push(eid);
            heap.push(Label {
                cost: label.cost + costs.cost(eid).expect("usable edge has a cost"),
                nodes,
                edges,
            });
        }
    }
    Ok(None)
}

/// Yen's algorithm: up to `k` distinct loopless paths in nondecreasing cost.
pub fn yen_ksp(
    state: &LinkState,
    src: NodeId,
    dst: NodeId,
    k: usize,
) -> Result<Vec<Path>, TopologyError> {
    let mut accepted: Vec<Path> = Vec::new();
    if k == 0 {
        return Ok(accepted);
    }
    let none_e = HashSet::new();
    let none_n = HashSet::new();
    match dijkstra(state, src, dst, &none_e, &none_n)? {
        Some(p) => accepted.push(p),
        None => return Ok(accepted),
    }
    let mut candidates: Vec<Path> = Vec::new();
    let mut seen: BTreeSet<Vec<EdgeId>> = BTreeSet::new();
    seen.insert(accepted[0].edges.clone());

    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        for i in 0..last.edges.len() {
            let spur = last.nodes[i];
            let root_edges = &last.edges[..i];
            let mut excluded_edges = HashSet::new();
            for p in &accepted {
                if p.edges.len() > i && p.edges[..i] == *root_edges {
                    excluded_edges.insert(p.edges[i]);
                }
            }
            let excluded_nodes: HashSet<NodeId> = last.nodes[..i].iter().copied().collect();
            let Some(spur_path) =
                dijkstra(state, spur, dst, &excluded_edges, &excluded_nodes)?
            else {
                continue;
            };
            let mut edges = root_edges.to_vec();
            edges.extend_from_slice(&spur_path.edges);
            if seen.contains(&edges) {
                continue;
            }
            let path = Path::from_edges(state, src, edges)?;
            seen.insert(path.edges.clone());
            candidates.push(path);
        }
        let Some(best) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.order(b.1))
            .map(|(i, _)| i)
        else {
            break;
        };
        accepted.push(candidates.swap_remove(best));
    }
    Ok(accepted)
}
