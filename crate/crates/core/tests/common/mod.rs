//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::HashSet;

use ampf_core::linkstate::{
    latency_from_probes, link_cost, normalized_ab, CostMap, LinkError, LinkState,
};
use ampf_core::pathfinding::yen_ksp;
use ampf_core::topology::{EdgeId, NodeId, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn close(got: f64, want: f64) -> bool {
    if got.is_infinite() || want.is_infinite() {
        return got == want;
    }
    (got - want).abs() <= 1e-9 * want.abs().max(1e-300)
}

fn scalar(name: &'static str, got: Result<f64, LinkError>, want: f64) -> Case {
    let ok = matches!(got, Ok(g) if close(g, want));
    Case {
        name,
        ok,
        detail: format!("got {got:?}, want {want}"),
    }
}

fn vector(name: &'static str, got: Result<Vec<f64>, LinkError>, want: &[f64]) -> Case {
    let ok = match &got {
        Ok(g) => g.len() == want.len() && g.iter().zip(want).all(|(a, b)| close(*a, *b)),
        Err(_) => false,
    };
    Case {
        name,
        ok,
        detail: format!("got {got:?}, want {want:?}"),
    }
}

fn error<T: std::fmt::Debug>(name: &'static str, got: Result<T, LinkError>) -> Case {
    Case {
        name,
        ok: got.is_err(),
        detail: format!("got {got:?}, want an error"),
    }
}

/// Three switches a-b-c on 32 Mbps links of 5 ms and 2 ms.
fn chain() -> (LinkState, EdgeId, EdgeId) {
    let mut t = Topology::new();
    let a = t.add_switch("a").unwrap();
    let b = t.add_switch("b").unwrap();
    let c = t.add_switch("c").unwrap();
    let ab = t.add_link(a, b, 32e6, 0.005).unwrap();
    let bc = t.add_link(b, c, 32e6, 0.002).unwrap();
    (LinkState::new(t, 1.0, 1.0), ab, bc)
}

/// Hand-computed substitutions into the latency, normalization, link-cost
/// and path-cost formulas, plus the reservation bookkeeping they read.
pub fn cost_formula_cases() -> Vec<Case> {
    let ms = 1e-3;
    let costs = CostMap::from_costs(vec![6.0, 7.0, 6.0]);
    let mut cases = vec![
        scalar("probe 10/4/2 ms", latency_from_probes(10.0 * ms, 4.0 * ms, 2.0 * ms), 7.0 * ms),
        error("probe 10/10/10 ms", latency_from_probes(10.0 * ms, 10.0 * ms, 10.0 * ms)),
        scalar("probe 25/6/8 ms", latency_from_probes(25.0 * ms, 6.0 * ms, 8.0 * ms), 18.0 * ms),
        scalar("probe 3/1/1 ms", latency_from_probes(3.0 * ms, 1.0 * ms, 1.0 * ms), 2.0 * ms),
        vector("nab 32,16", normalized_ab(&[32e6, 16e6]), &[1.0, 0.5]),
        vector("nab single", normalized_ab(&[7e6]), &[1.0]),
        vector("nab 32,32,8", normalized_ab(&[32.0, 32.0, 8.0]), &[1.0, 1.0, 0.25]),
        vector("nab 20,5,10,40", normalized_ab(&[20.0, 5.0, 10.0, 40.0]), &[0.5, 0.125, 0.25, 1.0]),
        error("nab all zero", normalized_ab(&[0.0, 0.0])),
        scalar("cost 5 ms nab 1", Ok(link_cost(5.0 * ms, 1.0, 1.0, 1.0)), 6.0),
        scalar("cost 5 ms nab 0.5", Ok(link_cost(5.0 * ms, 0.5, 1.0, 1.0)), 7.0),
        scalar("cost nab 0", Ok(link_cost(5.0 * ms, 0.0, 1.0, 1.0)), f64::INFINITY),
        scalar("cost weighted", Ok(link_cost(2.5 * ms, 0.25, 2.0, 3.0)), 17.0),
        scalar("cost bandwidth only", Ok(link_cost(9.0 * ms, 0.4, 0.0, 10.0)), 25.0),
        scalar("path 6+7", costs.path_cost(&[EdgeId(0), EdgeId(1)]), 13.0),
        scalar("empty path", costs.path_cost(&[]), 0.0),
        scalar("path 6+7+6", costs.path_cost(&[EdgeId(0), EdgeId(1), EdgeId(2)]), 19.0),
    ];

    let (mut s, ab, _) = chain();
    let r = s.reserve_bw(ab, 10e6).map(|_| s.available_bw(ab));
    cases.push(scalar("reserve 10 of 32", r, 22e6));

    let (mut s, ab, _) = chain();
    cases.push(error("reserve 40 of 32", s.reserve_bw(ab, 40e6)));

    let (mut s, ab, _) = chain();
    let r = s
        .reserve_bw(ab, 10e6)
        .and_then(|_| s.release_bw(ab, 10e6))
        .map(|_| s.available_bw(ab));
    cases.push(scalar("reserve then release", r, 32e6));

    let (mut s, ab, _) = chain();
    cases.push(error("over-release", s.release_bw(ab, 1.0)));

    // Half of a-b reserved: NAB 0.5 there, 1.0 on b-c; 5 + 2 and 2 + 1.
    let (mut s, ab, bc) = chain();
    s.reserve_bw(ab, 16e6).unwrap();
    s.refresh_costs();
    cases.push(scalar("refreshed a-b", s.cost_map().cost(ab), 7.0));
    cases.push(scalar("refreshed b-c", s.cost_map().cost(bc), 3.0));
    cases.push(scalar("refreshed a-b-c", s.cost_map().path_cost(&[ab, bc]), 10.0));
    cases
}

/// A random switch graph on `n` nodes with random directed edge costs.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> LinkState {
    let mut t = Topology::new();
    let nodes: Vec<NodeId> = (0..n).map(|i| t.add_switch(&format!("s{i}")).unwrap()).collect();
    let density = rng.random_range(0.3..0.9);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                t.add_link(nodes[i], nodes[j], 1e6, 0.001).unwrap();
                if rng.random_bool(0.1) {
                    t.add_link(nodes[i], nodes[j], 1e6, 0.001).unwrap();
                }
            }
        }
    }
    let costs: Vec<f64> = (0..t.edge_count()).map(|_| rng.random_range(1.0..10.0)).collect();
    let mut state = LinkState::new(t, 1.0, 1.0);
    state.set_cost_map(CostMap::from_costs(costs));
    state
}

/// Every simple path from `src` to `dst` as (cost, nodes, edges), sorted.
pub fn all_simple_paths(state: &LinkState, src: NodeId, dst: NodeId) -> Vec<(f64, Vec<NodeId>, Vec<EdgeId>)> {
    fn walk(
        state: &LinkState,
        dst: NodeId,
        nodes: &mut Vec<NodeId>,
        edges: &mut Vec<EdgeId>,
        seen: &mut HashSet<NodeId>,
        out: &mut Vec<(f64, Vec<NodeId>, Vec<EdgeId>)>,
    ) {
        let here = *nodes.last().unwrap();
        if here == dst {
            let cost = edges.iter().fold(0.0, |acc, e| acc + state.cost_map().cost(*e).unwrap());
            out.push((cost, nodes.clone(), edges.clone()));
            return;
        }
        for &e in state.topology().out_edges(here) {
            let next = state.topology().edge(e).to;
            if seen.insert(next) {
                nodes.push(next);
                edges.push(e);
                walk(state, dst, nodes, edges, seen, out);
                nodes.pop();
                edges.pop();
                seen.remove(&next);
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = HashSet::from([src]);
    walk(state, dst, &mut vec![src], &mut Vec::new(), &mut seen, &mut out);
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    out
}

/// Runs Yen against exhaustive enumeration on `graphs` random graphs with
/// 2 to 8 switches. Returns the first disagreement.
pub fn yen_matches_enumeration(graphs: usize, k: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in 0..graphs {
        let n = rng.random_range(2..=8);
        let state = random_graph(&mut rng, n);
        let src = NodeId(0);
        let dst = NodeId(n as u32 - 1);
        let want: Vec<_> = all_simple_paths(&state, src, dst).into_iter().take(k).collect();
        let got = yen_ksp(&state, src, dst, k).map_err(|e| format!("graph {g}: {e}"))?;
        let got: Vec<_> = got
            .into_iter()
            .map(|p| (p.total_cost, p.nodes, p.edges))
            .collect();
        if got != want {
            return Err(format!("graph {g} ({n} nodes): yen {got:?}, enumeration {want:?}"));
        }
    }
    Ok(())
}
