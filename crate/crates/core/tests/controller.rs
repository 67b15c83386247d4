use std::collections::BTreeMap;

use ampf_core::classifier::DecisionTree;
use ampf_core::controller::rules::{PRIORITY_ASSIGNED, PRIORITY_PROVISIONAL};
use ampf_core::controller::{
    Action, Controller, ControllerError, Mode, NetworkView, PolicyConfig, ProbeSample,
};
use ampf_core::experiment::scenarios::replica_topology;
use ampf_core::flow::{ClassLabel, Direction, FlowId, FlowKey, PacketRecord, Transport};
use ampf_core::pathfinding::yen_ksp;
use ampf_core::time::SimTime;
use ampf_core::topology::{EdgeId, NodeId, Topology};

const C: f64 = 0.001;

/// Idle network: probes return base latency, delivered bytes are scripted.
struct View {
    topo: Topology,
    delivered: BTreeMap<FlowKey, u64>,
}

impl NetworkView for View {
    fn probe(&self, edge: EdgeId) -> ProbeSample {
        let lat = self.topo.edge(edge).base_latency;
        ProbeSample {
            t_total: 2.0 * C + lat,
            t_s1: 2.0 * C,
            t_s2: 2.0 * C,
        }
    }

    fn delivered_bytes(&self, key: &FlowKey) -> u64 {
        self.delivered.get(key).copied().unwrap_or(0)
    }
}

struct Fixture {
    ctl: Controller,
    view: View,
    h1: NodeId,
    h2: NodeId,
    s1: NodeId,
}

fn fixture(mode: Mode, label: u8, seed: u64) -> Fixture {
    let topo = replica_topology();
    let tree = match mode {
        Mode::Aware => Some(DecisionTree::leaf(ClassLabel::new(label).unwrap())),
        Mode::Unaware => None,
    };
    let ctl = Controller::new(
        topo.clone(),
        PolicyConfig::default(),
        mode,
        tree,
        SimTime::from_secs(C),
        seed,
    )
    .unwrap();
    Fixture {
        h1: topo.node_by_name("h1").unwrap(),
        h2: topo.node_by_name("h2").unwrap(),
        s1: topo.node_by_name("s1").unwrap(),
        ctl,
        view: View {
            topo,
            delivered: BTreeMap::new(),
        },
    }
}

fn packet(key: FlowKey, t: f64, transport: Transport) -> PacketRecord {
    PacketRecord {
        timestamp: t,
        src: key.src,
        dst: key.dst,
        size: 1000,
        flow_id: key.flow_id,
        direction: Direction::Forward,
        transport,
    }
}

impl Fixture {
    fn key(&self, id: u64) -> FlowKey {
        FlowKey::new(self.h1, self.h2, FlowId(id))
    }

    /// Sends `n` packets of `key` to the controller from the source switch,
    /// 10 ms apart starting at `t0`; returns all actions.
    fn feed(&mut self, key: FlowKey, t0: f64, n: usize, transport: Transport) -> Vec<Action> {
        let mut out = Vec::new();
        for i in 0..n {
            let t = t0 + i as f64 * 0.01;
            let acts = self
                .ctl
                .handle_packet_in(self.s1, &packet(key, t, transport), SimTime::from_secs(t), &self.view)
                .unwrap();
            out.extend(acts);
        }
        out
    }
}

#[test]
fn aware_mode_needs_a_classifier() {
    let r = Controller::new(
        replica_topology(),
        PolicyConfig::default(),
        Mode::Aware,
        None,
        SimTime::from_secs(C),
        0,
    );
    assert!(matches!(r, Err(ControllerError::MissingClassifier)));
}

#[test]
fn provisional_path_is_median_without_source_rule() {
    let mut f = fixture(Mode::Aware, 1, 0);
    let key = f.key(1);
    let acts = f.feed(key, 1.0, 1, Transport::Udp);
    let entry = f.ctl.flow(&key).unwrap();
    assert!(entry.provisional);
    assert_eq!(entry.class, None);

    let paths = yen_ksp(f.ctl.links(), f.s1, entry.current_path.dst(), 8).unwrap();
    assert_eq!(paths.len(), 8);
    // ceil(8 / 2) = 4th path.
    assert_eq!(entry.current_path.nodes, paths[3].nodes);
    assert_eq!(
        acts,
        vec![
            Action::ScheduleExpiry {
                at: entry.install_ts + SimTime::from_secs(100.0)
            },
            Action::Forward {
                switch: f.s1,
                next_hop: paths[3].edges[0]
            }
        ]
    );

    let now = SimTime::from_secs(1.5);
    assert!(f.ctl.rules().lookup(f.s1, &key, now).is_none());
    for sw in &entry.current_path.nodes[1..] {
        let rule = f.ctl.rules().lookup(*sw, &key, now).expect("rule on every later switch");
        assert_eq!(rule.priority, PRIORITY_PROVISIONAL);
    }
}

#[test]
fn classification_happens_once_at_the_observation_count() {
    let mut f = fixture(Mode::Aware, 2, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 49, Transport::Tcp);
    assert_eq!(f.ctl.stats().classifications, 0);
    assert!(f.ctl.flow(&key).unwrap().provisional);

    let acts = f.feed(key, 1.49, 1, Transport::Tcp);
    assert_eq!(f.ctl.stats().classifications, 1);
    let entry = f.ctl.flow(&key).unwrap().clone();
    assert_eq!(entry.class, ClassLabel::new(2));
    assert!(!entry.provisional);
    assert_eq!(entry.packets_observed, 50);

    // Rules on every switch of the assigned path, source included.
    let now = entry.install_ts;
    for sw in &entry.current_path.nodes {
        let rule = f.ctl.rules().lookup(*sw, &key, now).unwrap();
        assert_eq!(rule.priority, PRIORITY_ASSIGNED);
    }
    let check = acts
        .iter()
        .find_map(|a| match a {
            Action::ScheduleEpochCheck { at, .. } => Some(*at),
            _ => None,
        })
        .expect("recheck scheduled");
    assert_eq!(check, entry.install_ts + SimTime::from_secs(90.0));

    f.feed(key, 2.0, 30, Transport::Tcp);
    assert_eq!(f.ctl.stats().classifications, 1);
}

#[test]
fn assigned_rules_outrank_provisional_ones() {
    for label in 1..=4 {
        let mut f = fixture(Mode::Aware, label, 0);
        let key = f.key(1);
        f.feed(key, 1.0, 1, Transport::Udp);
        let provisional = f.ctl.flow(&key).unwrap().current_path.clone();
        f.feed(key, 1.01, 49, Transport::Udp);
        let entry = f.ctl.flow(&key).unwrap();
        let now = entry.install_ts;
        for sw in provisional.nodes.iter().skip(1) {
            let winner = f.ctl.rules().lookup(*sw, &key, now).unwrap();
            if entry.current_path.position(*sw).is_some() {
                assert_eq!(winner.priority, PRIORITY_ASSIGNED);
            } else {
                assert_eq!(winner.priority, PRIORITY_PROVISIONAL);
            }
        }
    }
}

fn classified_path_cost(label: u8) -> f64 {
    let mut f = fixture(Mode::Aware, label, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Udp);
    let entry = f.ctl.flow(&key).unwrap();
    entry.current_path.total_cost
}

#[test]
fn higher_class_numbers_never_get_cheaper_paths() {
    let costs: Vec<f64> = (1..=4).map(classified_path_cost).collect();
    for w in costs.windows(2) {
        assert!(w[0] <= w[1], "{costs:?}");
    }
    // Class 1 takes the cheapest path on an idle network.
    let f = fixture(Mode::Aware, 1, 0);
    let cheapest = yen_ksp(f.ctl.links(), f.s1, f.view.topo.node_by_name("s5").unwrap(), 1).unwrap();
    assert_eq!(costs[0], cheapest[0].total_cost);
}

#[test]
fn reservations_follow_the_class_minimum() {
    let mut f = fixture(Mode::Aware, 1, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Tcp);
    let entry = f.ctl.flow(&key).unwrap().clone();
    assert_eq!(entry.reserved_bw, 10e6);
    for e in &entry.current_path.edges {
        assert_eq!(f.ctl.links().reserved_bw(*e), 10e6);
    }
    f.ctl.check_reservations().unwrap();
}

fn recheck(f: &mut Fixture, key: FlowKey, bps: f64) -> Vec<Action> {
    let entry = f.ctl.flow(&key).unwrap().clone();
    let at = entry.install_ts + SimTime::from_secs(90.0);
    let bytes = (bps * at.saturating_sub(SimTime::from_secs(1.0)).as_secs() / 8.0) as u64;
    f.view.delivered.insert(key, bytes);
    f.ctl.epoch_check(key, entry.generation, at, &f.view).unwrap()
}

#[test]
fn tcp_flow_meeting_its_minimum_keeps_its_path() {
    let mut f = fixture(Mode::Aware, 2, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Tcp);
    let before = f.ctl.flow(&key).unwrap().current_path.clone();
    recheck(&mut f, key, 6e6);
    let s = f.ctl.stats();
    assert_eq!((s.keeps, s.reroutes), (1, 0));
    let entry = f.ctl.flow(&key).unwrap();
    assert_eq!(entry.current_path.nodes, before.nodes);
    let rate = entry.achieved_throughput.unwrap();
    assert!((rate - 6e6).abs() < 0.02 * 6e6, "{rate}");
}

#[test]
fn tcp_flow_below_its_minimum_is_rerouted() {
    let mut f = fixture(Mode::Aware, 1, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Tcp);
    recheck(&mut f, key, 8e6);
    assert_eq!(f.ctl.stats().reroutes, 1);
    f.ctl.check_reservations().unwrap();
}

#[test]
fn udp_flows_always_keep() {
    let mut f = fixture(Mode::Aware, 1, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Udp);
    recheck(&mut f, key, 1e3);
    let s = f.ctl.stats();
    assert_eq!((s.keeps, s.reroutes), (1, 0));
}

#[test]
fn stale_rechecks_are_ignored() {
    let mut f = fixture(Mode::Aware, 2, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Tcp);
    let entry = f.ctl.flow(&key).unwrap().clone();
    let acts = f
        .ctl
        .epoch_check(key, entry.generation + 1, SimTime::from_secs(50.0), &f.view)
        .unwrap();
    assert!(acts.is_empty());
    assert_eq!(f.ctl.stats().keeps + f.ctl.stats().reroutes, 0);
}

#[test]
fn expiry_releases_reservations() {
    let mut f = fixture(Mode::Aware, 1, 0);
    let key = f.key(1);
    f.feed(key, 1.0, 50, Transport::Tcp);
    f.ctl.flow_finished(key, SimTime::from_secs(2.0));
    let gone = f.ctl.expire_rules(SimTime::from_secs(500.0)).unwrap();
    assert_eq!(gone, vec![key]);
    assert!(f.ctl.flow(&key).is_none());
    for (id, _) in f.view.topo.edges() {
        assert_eq!(f.ctl.links().reserved_bw(id), 0.0);
    }
    f.ctl.check_reservations().unwrap();
}

#[test]
fn unaware_mode_installs_on_every_switch_without_classifying() {
    let mut f = fixture(Mode::Unaware, 1, 3);
    let key = f.key(1);
    f.feed(key, 1.0, 60, Transport::Udp);
    assert_eq!(f.ctl.stats().classifications, 0);
    let entry = f.ctl.flow(&key).unwrap();
    assert_eq!(entry.class, None);
    assert_eq!(entry.reserved_bw, 0.0);
    for sw in &entry.current_path.nodes {
        assert!(f.ctl.rules().lookup(*sw, &key, entry.install_ts).is_some());
    }
}

#[test]
fn unaware_choice_is_uniform_over_k_paths() {
    let mut f = fixture(Mode::Unaware, 1, 11);
    let s5 = f.view.topo.node_by_name("s5").unwrap();
    let paths = yen_ksp(f.ctl.links(), f.s1, s5, 8).unwrap();
    let n = 8000;
    let mut counts = vec![0u64; paths.len()];
    for id in 0..n {
        let key = f.key(id);
        f.feed(key, 1.0, 1, Transport::Udp);
        let chosen = &f.ctl.flow(&key).unwrap().current_path.nodes;
        let i = paths.iter().position(|p| &p.nodes == chosen).unwrap();
        counts[i] += 1;
    }
    let expected = n as f64 / paths.len() as f64;
    let chi2: f64 = counts
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    // 7 degrees of freedom, p = 0.001.
    assert!(chi2 < 24.32, "chi2 {chi2}, counts {counts:?}");
}
