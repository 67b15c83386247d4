//! Built-in traffic scenarios over a two-host topology.
//!
//! Every scenario first loads the network with CBR background flows pinned
//! to edge-disjoint routes, in both directions, with their rates reserved.
//! Lighter background goes on cheaper routes.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::{ClassLabel, FlowId};
use crate::linkstate::LinkState;
use crate::pathfinding::yen_ksp;
use crate::sim::traffic::{PinnedRoute, TrafficKind, TrafficSpec};
use crate::topology::{NodeId, Topology, TopologyError};

/// The replica testbed: five switches, H1 on s1 and H2 on s5.
pub const REPLICA_TOPOLOGY: &str = include_str!("../../data/replica.topo");

pub fn replica_topology() -> Topology {
    Topology::parse(REPLICA_TOPOLOGY).expect("bundled topology parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    UdpJitter,
    TcpThroughput,
    MixedThroughput,
    MixedJitter,
    LateFlow,
    /// A Class 1 TCP flow whose path is flooded by unreserved cross traffic
    /// shortly after assignment.
    EpochRecheck,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::UdpJitter,
        Scenario::TcpThroughput,
        Scenario::MixedThroughput,
        Scenario::MixedJitter,
        Scenario::LateFlow,
        Scenario::EpochRecheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::UdpJitter => "udp-jitter",
            Scenario::TcpThroughput => "tcp-throughput",
            Scenario::MixedThroughput => "mixed-throughput",
            Scenario::MixedJitter => "mixed-jitter",
            Scenario::LateFlow => "late-flow",
            Scenario::EpochRecheck => "epoch-recheck",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub duration: f64,
    /// Background rates per direction, bits/second, cheapest route first.
    pub background_rates: Vec<f64>,
    pub background_packet: u32,
    pub background_dither: f64,
    /// Rate of each measured UDP flow, bits/second.
    pub udp_rate: f64,
    /// Packet size used by each class's applications, bytes.
    pub class_packet_sizes: [u32; ClassLabel::COUNT],
    /// Measured flows start uniformly inside this window, seconds.
    pub start_window: (f64, f64),
    pub late_start: f64,
    /// Unreserved cross traffic in the recheck scenario.
    pub cross_rate: f64,
    pub cross_start: f64,
    /// Receiver window of the measured TCP flows, bytes; `None` leaves
    /// them limited only by congestion.
    pub tcp_window: Option<u32>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            duration: 1000.0,
            background_rates: vec![12e6, 16e6, 20e6, 24e6],
            background_packet: 1250,
            background_dither: 0.5,
            udp_rate: 2e6,
            class_packet_sizes: [1000, 1300, 700, 1500],
            start_window: (1.0, 30.0),
            late_start: 450.0,
            cross_rate: 24e6,
            cross_start: 10.0,
            tcp_window: Some(65536),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError(pub String);

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ScenarioError {}

impl From<TopologyError> for ScenarioError {
    fn from(e: TopologyError) -> Self {
        ScenarioError(e.to_string())
    }
}

/// Up to `count` switch routes from `src` to `dst` that share no link,
/// picked greedily from the cheapest paths of the idle network.
pub fn disjoint_routes(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    count: usize,
) -> Result<Vec<Vec<NodeId>>, ScenarioError> {
    let state = LinkState::new(topo.clone(), 1.0, 1.0);
    let candidates = yen_ksp(&state, src, dst, 4 * count.max(1) + 8)?;
    let mut used: HashSet<(NodeId, NodeId)> = HashSet::new();
    let mut routes = Vec::new();
    for p in candidates {
        if routes.len() == count {
            break;
        }
        let links: Vec<(NodeId, NodeId)> = p
            .nodes
            .windows(2)
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .collect();
        if links.iter().any(|l| used.contains(l)) {
            continue;
        }
        used.extend(links);
        routes.push(p.nodes);
    }
    Ok(routes)
}

struct Builder<'a> {
    params: &'a ScenarioParams,
    rng: ChaCha8Rng,
    next_id: u64,
    specs: Vec<TrafficSpec>,
}

impl Builder<'_> {
    fn add(&mut self, src: NodeId, dst: NodeId, kind: TrafficKind, class: ClassLabel, size: u32, start: f64, pinned: Option<PinnedRoute>) {
        let id = self.next_id;
        self.next_id += 1;
        self.specs.push(TrafficSpec {
            flow_id: FlowId(id),
            src,
            dst,
            kind,
            class,
            packet_size: size,
            start,
            duration: (self.params.duration - start).max(f64::MIN_POSITIVE),
            rng_seed: self.rng.random(),
            pinned,
        });
    }

    fn start(&mut self) -> f64 {
        let (lo, hi) = self.params.start_window;
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn udp(&mut self, src: NodeId, dst: NodeId, class: ClassLabel) {
        let size = self.params.class_packet_sizes[class.index()];
        let rate = self.params.udp_rate;
        let start = self.start();
        self.add(src, dst, TrafficKind::Cbr { rate, dither: 0.0 }, class, size, start, None);
    }

    fn tcp(&mut self, src: NodeId, dst: NodeId, class: ClassLabel, start: f64) {
        let size = self.params.class_packet_sizes[class.index()];
        let kind = TrafficKind::Aimd {
            max_window: self.params.tcp_window.map(|w| (w as f64 / size as f64).max(1.0)),
        };
        self.add(src, dst, kind, class, size, start, None);
    }
}

/// Traffic for `scenario` between hosts `a` and `b`. Measured flows get ids
/// from 1; background flows follow.
pub fn build_traffic(
    scenario: Scenario,
    topo: &Topology,
    a: NodeId,
    b: NodeId,
    params: &ScenarioParams,
    seed: u64,
) -> Result<Vec<TrafficSpec>, ScenarioError> {
    if !topo.is_host(a) || !topo.is_host(b) || a == b {
        return Err(ScenarioError("scenario endpoints must be two distinct hosts".into()));
    }
    if !(params.duration.is_finite() && params.duration > 0.0) {
        return Err(ScenarioError("duration must be positive".into()));
    }
    let mut builder = Builder {
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        next_id: 1,
        specs: Vec::new(),
    };
    let classes: Vec<ClassLabel> = ClassLabel::all().collect();
    let directions = [(a, b), (b, a)];
    match scenario {
        Scenario::UdpJitter => {
            for (s, d) in directions {
                for c in &classes {
                    builder.udp(s, d, *c);
                }
            }
        }
        Scenario::TcpThroughput | Scenario::LateFlow => {
            for (s, d) in directions {
                for c in &classes {
                    let start = builder.start();
                    builder.tcp(s, d, *c, start);
                }
            }
            if scenario == Scenario::LateFlow {
                if params.late_start >= params.duration {
                    return Err(ScenarioError("late_start must fall inside the run".into()));
                }
                builder.tcp(a, b, classes[0], params.late_start);
            }
        }
        Scenario::MixedThroughput | Scenario::MixedJitter => {
            for (s, d) in directions {
                for c in &classes {
                    let start = builder.start();
                    builder.tcp(s, d, *c, start);
                    builder.udp(s, d, *c);
                }
            }
        }
        Scenario::EpochRecheck => {
            let start = builder.start().min(params.cross_start / 2.0);
            builder.tcp(a, b, classes[0], start);
        }
    }

    let sa = topo.attachment(a)?;
    let sb = topo.attachment(b)?;
    let routes = disjoint_routes(topo, sa, sb, params.background_rates.len())?;
    if routes.is_empty() && !params.background_rates.is_empty() {
        return Err(ScenarioError("hosts are not connected".into()));
    }
    let bg_class = classes[ClassLabel::COUNT - 1];
    for (route, rate) in routes.iter().zip(&params.background_rates) {
        for (s, d, switches) in [
            (a, b, route.clone()),
            (b, a, route.iter().rev().copied().collect::<Vec<_>>()),
        ] {
            let kind = TrafficKind::Cbr {
                rate: *rate,
                dither: params.background_dither,
            };
            let pinned = Some(PinnedRoute {
                switches,
                reserve: true,
            });
            builder.add(s, d, kind, bg_class, params.background_packet, 0.0, pinned);
        }
    }
    if scenario == Scenario::EpochRecheck {
        // Floods the cheapest route, where the Class 1 flow lands.
        let route = routes
            .first()
            .cloned()
            .ok_or_else(|| ScenarioError("no route for cross traffic".into()))?;
        let kind = TrafficKind::Cbr {
            rate: params.cross_rate,
            dither: params.background_dither,
        };
        let pinned = Some(PinnedRoute {
            switches: route,
            reserve: false,
        });
        builder.add(a, b, kind, bg_class, params.background_packet, params.cross_start, pinned);
    }
    let ids: BTreeSet<FlowId> = builder.specs.iter().map(|s| s.flow_id).collect();
    debug_assert_eq!(ids.len(), builder.specs.len());
    Ok(builder.specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(t: &Topology, r: &[NodeId]) -> Vec<String> {
        r.iter().map(|n| t.name(*n).to_string()).collect()
    }

    #[test]
    fn replica_has_four_disjoint_spokes() {
        let t = replica_topology();
        let s1 = t.node_by_name("s1").unwrap();
        let s5 = t.node_by_name("s5").unwrap();
        let routes = disjoint_routes(&t, s1, s5, 8).unwrap();
        assert_eq!(routes.len(), 4);
        assert_eq!(names(&t, &routes[0]), ["s1", "s2", "s5"]);
        assert_eq!(names(&t, &routes[3]), ["s1", "s5"]);
    }

    #[test]
    fn scenario_shapes() {
        let t = replica_topology();
        let h1 = t.node_by_name("h1").unwrap();
        let h2 = t.node_by_name("h2").unwrap();
        let p = ScenarioParams::default();
        let count = |sc| build_traffic(sc, &t, h1, h2, &p, 1).unwrap();
        let udp = count(Scenario::UdpJitter);
        assert_eq!(udp.iter().filter(|s| !s.is_background()).count(), 8);
        assert_eq!(udp.iter().filter(|s| s.is_background()).count(), 8);
        assert_eq!(count(Scenario::MixedJitter).len(), 24);
        let late = count(Scenario::LateFlow);
        let lf = late.iter().find(|s| s.start == 450.0).unwrap();
        assert_eq!(lf.class.get(), 1);
        assert_eq!(lf.src, h1);
        assert_eq!(late.len(), 17);
        assert_eq!(count(Scenario::EpochRecheck).len(), 10);
        assert_eq!(udp, count(Scenario::UdpJitter));
        assert_eq!("late-flow".parse::<Scenario>().unwrap(), Scenario::LateFlow);
        assert!("nope".parse::<Scenario>().is_err());
    }
}
