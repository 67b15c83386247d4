//! The forwarding controller: provisional routing while a flow is observed,
//! classification, class-interval path assignment with bandwidth
//! reservation, and throughput rechecks shortly before rules expire.
//!
//! The controller owns the link-state database and the switches' flow
//! tables. Rules are written with an `install_ts` in the future to model the
//! control-channel delay; the simulator reads the tables through
//! [`Controller::rules`].

pub mod log;
pub mod policy;
pub mod rules;

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::DecisionTree;
use crate::flow::{ClassLabel, ClassTable, FlowError, FlowKey, FlowRecord, PacketRecord, Transport};
use crate::linkstate::{latency_from_probes, LinkError, LinkState};
use crate::pathfinding::{dijkstra, yen_ksp, Path};
use crate::time::SimTime;
use crate::topology::{EdgeId, NodeId, Topology, TopologyError};

use self::log::{LogEvent, LogKind};
use self::policy::{assign_index, epoch_decision, feasible_paths, provisional_index, EpochDecision};
use self::rules::{FlowRule, RuleTable, PRIORITY_ASSIGNED, PRIORITY_PINNED, PRIORITY_PROVISIONAL};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid policy: {0}")]
    InvalidConfig(String),
    #[error("aware mode needs a trained classifier")]
    MissingClassifier,
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("pinned path {0} is not a chain of linked switches")]
    BadPinnedPath(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub n_observe: u64,
    pub k: usize,
    /// Hard timeout of assigned and provisional rules, seconds.
    pub hard_timeout: f64,
    /// The recheck runs this many seconds before the rules expire.
    pub epoch_check_offset: f64,
    pub classes: ClassTable,
    pub lambda_a: f64,
    pub lambda_b: f64,
    /// Period of the background latency probes, seconds.
    pub refresh_epoch: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            n_observe: 50,
            k: 8,
            hard_timeout: 100.0,
            epoch_check_offset: 10.0,
            classes: ClassTable::default(),
            lambda_a: 1.0,
            lambda_b: 1.0,
            refresh_epoch: 100.0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidConfig(m.to_string()));
        if self.n_observe < 2 {
            return bad("n_observe must be at least 2");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.hard_timeout.is_finite() && self.hard_timeout > 0.0) {
            return bad("hard_timeout must be positive");
        }
        if !(self.epoch_check_offset >= 0.0 && self.epoch_check_offset < self.hard_timeout) {
            return bad("epoch_check_offset must lie in [0, hard_timeout)");
        }
        if !(self.lambda_a >= 0.0 && self.lambda_b >= 0.0)
            || !(self.lambda_a.is_finite() && self.lambda_b.is_finite())
        {
            return bad("cost weights must be finite and non-negative");
        }
        if !(self.refresh_epoch.is_finite() && self.refresh_epoch > 0.0) {
            return bad("refresh_epoch must be positive");
        }
        for c in self.classes.iter() {
            if !(c.min_bw.is_finite() && c.min_bw >= 0.0) {
                return bad("class bandwidth must be finite and non-negative");
            }
            if c.acceptable_delay.is_some_and(|d| !(d.is_finite() && d > 0.0)) {
                return bad("class delay bound must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Classify flows and place them by class.
    Aware,
    /// Uniformly random choice among the K shortest paths.
    Unaware,
}

/// The controller's view into the data plane.
pub trait NetworkView {
    /// Round-trip measurements for one directed trunk edge.
    fn probe(&self, edge: EdgeId) -> ProbeSample;
    /// Cumulative bytes of `key` delivered to its destination host.
    fn delivered_bytes(&self, key: &FlowKey) -> u64;
}

/// Times in seconds: the controller-switch-switch-controller trip and the
/// controller round trips to either end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub t_total: f64,
    pub t_s1: f64,
    pub t_s2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Release the buffered packet from `switch` onto `next_hop`.
    Forward { switch: NodeId, next_hop: EdgeId },
    Drop { reason: DropReason },
    ScheduleEpochCheck {
        key: FlowKey,
        at: SimTime,
        generation: u64,
    },
    ScheduleExpiry { at: SimTime },
}

/// Controller-side state of one admitted flow.
#[derive(Debug, Clone)]
pub struct FlowEntry {
    pub key: FlowKey,
    pub transport: Transport,
    pub class: Option<ClassLabel>,
    pub current_path: Path,
    pub provisional: bool,
    pub packets_observed: u64,
    pub record: FlowRecord,
    pub reserved_bw: f64,
    pub reserved_edges: Vec<EdgeId>,
    /// When the current assignment's rules took effect.
    pub install_ts: SimTime,
    /// Throughput measured at the last recheck, bits/second.
    pub achieved_throughput: Option<f64>,
    /// Admitted without a reservation because nothing was feasible.
    pub best_effort: bool,
    pub finished: bool,
    pub generation: u64,
    pub last_seen: SimTime,
    mark: (SimTime, u64),
}

#[derive(Debug, Clone)]
struct PinnedFlow {
    edges: Vec<EdgeId>,
    reserved_bw: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ControllerStats {
    pub packet_ins: u64,
    pub classifications: u64,
    pub keeps: u64,
    pub reroutes: u64,
    pub fallbacks: u64,
    pub detours: u64,
    pub unreachable: u64,
    pub probe_sweeps: u64,
}

pub struct Controller {
    cfg: PolicyConfig,
    mode: Mode,
    control_latency: SimTime,
    hard_timeout: SimTime,
    check_offset: SimTime,
    links: LinkState,
    tree: Option<DecisionTree>,
    rng: ChaCha8Rng,
    flows: BTreeMap<FlowKey, FlowEntry>,
    pinned: BTreeMap<FlowKey, PinnedFlow>,
    rules: RuleTable,
    log: Vec<LogEvent>,
    stats: ControllerStats,
}

impl Controller {
    pub fn new(
        topology: Topology,
        cfg: PolicyConfig,
        mode: Mode,
        tree: Option<DecisionTree>,
        control_latency: SimTime,
        seed: u64,
    ) -> Result<Controller, ControllerError> {
        cfg.validate()?;
        topology.validate()?;
        if mode == Mode::Aware && tree.is_none() {
            return Err(ControllerError::MissingClassifier);
        }
        let links = LinkState::new(topology, cfg.lambda_a, cfg.lambda_b);
        Ok(Controller {
            hard_timeout: SimTime::from_secs(cfg.hard_timeout),
            check_offset: SimTime::from_secs(cfg.epoch_check_offset),
            cfg,
            mode,
            control_latency,
            links,
            tree,
            rng: ChaCha8Rng::seed_from_u64(seed),
            flows: BTreeMap::new(),
            pinned: BTreeMap::new(),
            rules: RuleTable::new(),
            log: Vec::new(),
            stats: ControllerStats::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        self.links.topology()
    }

    pub fn links(&self) -> &LinkState {
        &self.links
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn flow(&self, key: &FlowKey) -> Option<&FlowEntry> {
        self.flows.get(key)
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowEntry> {
        self.flows.values()
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn stats(&self) -> ControllerStats {
        self.stats
    }

    /// Routes a flow along fixed switches with permanent rules, optionally
    /// reserving `rate` on every edge. Used for background load.
    pub fn pin_flow(
        &mut self,
        key: FlowKey,
        switches: &[NodeId],
        rate: f64,
        reserve: bool,
        now: SimTime,
    ) -> Result<(), ControllerError> {
        let topo = self.links.topology();
        let describe = || {
            switches
                .iter()
                .map(|n| topo.name(*n).to_string())
                .collect::<Vec<_>>()
                .join("-")
        };
        if switches.is_empty()
            || switches.iter().any(|s| !topo.is_switch(*s))
            || topo.attachment(key.src)? != switches[0]
            || topo.attachment(key.dst)? != *switches.last().unwrap()
        {
            return Err(ControllerError::BadPinnedPath(describe()));
        }
        let mut edges = Vec::with_capacity(switches.len() - 1);
        for pair in switches.windows(2) {
            let e = topo
                .out_edges(pair[0])
                .iter()
                .copied()
                .find(|e| topo.edge(*e).to == pair[1])
                .ok_or_else(|| ControllerError::BadPinnedPath(describe()))?;
            edges.push(e);
        }
        let egress = self.egress_edge(key.dst)?;
        let reserved_bw = if reserve { rate } else { 0.0 };
        self.links.reserve_path(&edges, reserved_bw)?;
        self.links.refresh_costs();
        for (i, sw) in switches.iter().enumerate() {
            let next_hop = edges.get(i).copied().unwrap_or(egress);
            self.rules.install(FlowRule {
                switch: *sw,
                key,
                next_hop,
                priority: PRIORITY_PINNED,
                hard_timeout: SimTime::MAX,
                install_ts: now,
            });
        }
        self.pinned.insert(key, PinnedFlow { edges, reserved_bw });
        self.push_log(now, LogKind::Pinned, key, None, Some(switches.to_vec()), format!("rate={rate}"));
        Ok(())
    }

    /// Measures every trunk edge and rebuilds the cost map. Samples that do
    /// not yield a positive latency leave the previous value in place.
    pub fn probe_all(&mut self, view: &dyn NetworkView) {
        let trunks: Vec<EdgeId> = self
            .links
            .topology()
            .edges()
            .map(|(id, _)| id)
            .filter(|id| self.links.topology().is_trunk(*id))
            .collect();
        for e in trunks {
            let s = view.probe(e);
            if let Ok(lat) = latency_from_probes(s.t_total, s.t_s1, s.t_s2) {
                self.links.set_latency(e, lat);
            }
        }
        self.links.refresh_costs();
        self.stats.probe_sweeps += 1;
    }

    /// A packet reached `switch` with no matching rule.
    pub fn handle_packet_in(
        &mut self,
        switch: NodeId,
        pkt: &PacketRecord,
        now: SimTime,
        view: &dyn NetworkView,
    ) -> Result<Vec<Action>, ControllerError> {
        self.stats.packet_ins += 1;
        let key = pkt.flow_key();
        let src_sw = self.links.topology().attachment(key.src)?;
        let mut actions = Vec::new();

        if !self.flows.contains_key(&key) && !self.pinned.contains_key(&key) {
            let admitted = match self.mode {
                Mode::Aware => self.admit_provisional(key, pkt.transport, now, view, &mut actions)?,
                Mode::Unaware => self.admit_random(key, pkt.transport, now, view, &mut actions)?,
            };
            if !admitted {
                self.stats.unreachable += 1;
                actions.push(Action::Drop {
                    reason: DropReason::Unreachable,
                });
                return Ok(actions);
            }
        }

        if let Some(entry) = self.flows.get_mut(&key) {
            entry.last_seen = now;
            if self.mode == Mode::Aware && entry.provisional && switch == src_sw {
                entry.record.update(pkt)?;
                entry.packets_observed += 1;
                if entry.packets_observed == self.cfg.n_observe {
                    self.classify_and_assign(key, now, view, &mut actions)?;
                }
            }
        }

        match self.next_hop(key, switch, now)? {
            Some(next_hop) => actions.push(Action::Forward { switch, next_hop }),
            None => {
                self.stats.unreachable += 1;
                actions.push(Action::Drop {
                    reason: DropReason::Unreachable,
                });
            }
        }
        Ok(actions)
    }

    /// Throughput audit shortly before the rules of `key` expire.
    pub fn epoch_check(
        &mut self,
        key: FlowKey,
        generation: u64,
        now: SimTime,
        view: &dyn NetworkView,
    ) -> Result<Vec<Action>, ControllerError> {
        let mut actions = Vec::new();
        let Some(entry) = self.flows.get_mut(&key) else {
            return Ok(actions);
        };
        if entry.generation != generation || entry.finished {
            return Ok(actions);
        }
        let Some(label) = entry.class else {
            return Ok(actions);
        };
        let (mark_ts, mark_bytes) = entry.mark;
        let bytes = view.delivered_bytes(&key);
        let elapsed = now.saturating_sub(mark_ts).as_secs();
        let measured = if elapsed > 0.0 {
            bytes.saturating_sub(mark_bytes) as f64 * 8.0 / elapsed
        } else {
            0.0
        };
        entry.achieved_throughput = Some(measured);
        let min_bw = self.cfg.classes.get(label).min_bw;
        let decision = if entry.best_effort {
            EpochDecision::Reroute
        } else {
            epoch_decision(entry.transport, min_bw, measured)
        };
        match decision {
            EpochDecision::Keep => {
                self.stats.keeps += 1;
                let path = entry.current_path.nodes.clone();
                let edges = entry.current_path.edges.clone();
                self.install_assigned(key, &edges, now, view, &mut actions)?;
                self.push_log(now, LogKind::Keep, key, Some(label), Some(path), format!("measured_bps={measured:.0}"));
            }
            EpochDecision::Reroute => {
                self.stats.reroutes += 1;
                self.release(key)?;
                self.probe_all(view);
                self.assign_path(key, label, LogKind::Reroute, format!("measured_bps={measured:.0}"), now, view, &mut actions)?;
            }
        }
        Ok(actions)
    }

    /// Removes expired rules; flows left without rules are forgotten and
    /// their reservations released. Returns the forgotten flows.
    pub fn expire_rules(&mut self, now: SimTime) -> Result<Vec<FlowKey>, ControllerError> {
        self.rules.expire(now);
        let mut gone = Vec::new();
        for (key, entry) in &self.flows {
            if self.rules.has_rules_for(key, now) {
                continue;
            }
            // A provisional flow keeps its observations while it is still
            // sending; the source switch never had a rule for it anyway.
            if entry.provisional && !entry.finished && now.saturating_sub(entry.last_seen) < self.hard_timeout {
                continue;
            }
            gone.push(*key);
        }
        for key in &gone {
            self.release(*key)?;
            let entry = self.flows.remove(key).expect("listed above");
            self.push_log(now, LogKind::Expired, *key, entry.class, None, String::new());
        }
        if !gone.is_empty() {
            self.links.refresh_costs();
        }
        Ok(gone)
    }

    /// The source stopped sending; pending rechecks become no-ops and the
    /// entry goes away when its rules expire.
    pub fn flow_finished(&mut self, key: FlowKey, now: SimTime) {
        if let Some(entry) = self.flows.get_mut(&key) {
            if !entry.finished {
                entry.finished = true;
                let class = entry.class;
                self.push_log(now, LogKind::Finished, key, class, None, String::new());
            }
        }
    }

    /// Checks that per-flow reservations add up to the link-state totals and
    /// that no link is over-reserved.
    pub fn check_reservations(&self) -> Result<(), String> {
        let topo = self.links.topology();
        let mut expected = vec![0.0_f64; topo.edge_count()];
        for entry in self.flows.values() {
            for e in &entry.reserved_edges {
                expected[e.index()] += entry.reserved_bw;
            }
        }
        for p in self.pinned.values() {
            for e in &p.edges {
                expected[e.index()] += p.reserved_bw;
            }
        }
        for (id, edge) in topo.edges() {
            let got = self.links.reserved_bw(id);
            let want = expected[id.index()];
            if (got - want).abs() > 1e-6 * edge.capacity.max(1.0) {
                return Err(format!("edge {}: reserved {got} but flows account for {want}", id.0));
            }
            if got > edge.capacity * (1.0 + 1e-12) {
                return Err(format!("edge {}: reserved {got} exceeds capacity {}", id.0, edge.capacity));
            }
        }
        Ok(())
    }

    fn egress_edge(&self, host: NodeId) -> Result<EdgeId, TopologyError> {
        let topo = self.links.topology();
        Ok(topo.edge(topo.access_edge(host)?).reverse)
    }

    fn k_paths(&self, key: FlowKey) -> Result<Vec<Path>, ControllerError> {
        let topo = self.links.topology();
        let src = topo.attachment(key.src)?;
        let dst = topo.attachment(key.dst)?;
        Ok(yen_ksp(&self.links, src, dst, self.cfg.k)?)
    }

    fn new_entry(&self, key: FlowKey, transport: Transport, path: Path, now: SimTime) -> FlowEntry {
        FlowEntry {
            key,
            transport,
            class: None,
            current_path: path,
            provisional: self.mode == Mode::Aware,
            packets_observed: 0,
            record: FlowRecord::new(key),
            reserved_bw: 0.0,
            reserved_edges: Vec::new(),
            install_ts: now + self.control_latency,
            achieved_throughput: None,
            best_effort: false,
            finished: false,
            generation: 0,
            last_seen: now,
            mark: (now, 0),
        }
    }

    fn admit_provisional(
        &mut self,
        key: FlowKey,
        transport: Transport,
        now: SimTime,
        view: &dyn NetworkView,
        actions: &mut Vec<Action>,
    ) -> Result<bool, ControllerError> {
        self.probe_all(view);
        let mut paths = self.k_paths(key)?;
        let Some(idx) = provisional_index(paths.len()) else {
            self.push_log(now, LogKind::Unreachable, key, None, None, String::new());
            return Ok(false);
        };
        let path = paths.swap_remove(idx);
        let install_ts = now + self.control_latency;
        let egress = self.egress_edge(key.dst)?;
        // The source switch gets no rule, so every packet of the flow keeps
        // reaching the controller until it is classified.
        for (i, sw) in path.nodes.iter().enumerate().skip(1) {
            let next_hop = path.edges.get(i).copied().unwrap_or(egress);
            self.rules.install(FlowRule {
                switch: *sw,
                key,
                next_hop,
                priority: PRIORITY_PROVISIONAL,
                hard_timeout: self.hard_timeout,
                install_ts,
            });
        }
        if path.nodes.len() > 1 {
            actions.push(Action::ScheduleExpiry {
                at: install_ts + self.hard_timeout,
            });
        }
        let nodes = path.nodes.clone();
        let n = idx + 1;
        self.flows.insert(key, self.new_entry(key, transport, path, now));
        self.push_log(now, LogKind::Provisional, key, None, Some(nodes), format!("rank={n}"));
        Ok(true)
    }

    fn admit_random(
        &mut self,
        key: FlowKey,
        transport: Transport,
        now: SimTime,
        view: &dyn NetworkView,
        actions: &mut Vec<Action>,
    ) -> Result<bool, ControllerError> {
        self.probe_all(view);
        let mut paths = self.k_paths(key)?;
        if paths.is_empty() {
            self.push_log(now, LogKind::Unreachable, key, None, None, String::new());
            return Ok(false);
        }
        let idx = self.rng.random_range(0..paths.len());
        let n = paths.len();
        let path = paths.swap_remove(idx);
        let edges = path.edges.clone();
        let nodes = path.nodes.clone();
        self.flows.insert(key, self.new_entry(key, transport, path, now));
        self.install_assigned(key, &edges, now, view, actions)?;
        self.push_log(now, LogKind::Random, key, None, Some(nodes), format!("choice={} of {n}", idx + 1));
        Ok(true)
    }

    fn classify_and_assign(
        &mut self,
        key: FlowKey,
        now: SimTime,
        view: &dyn NetworkView,
        actions: &mut Vec<Action>,
    ) -> Result<(), ControllerError> {
        let tree = self.tree.as_ref().ok_or(ControllerError::MissingClassifier)?;
        let entry = self.flows.get_mut(&key).expect("caller checked");
        let fv = entry.record.features()?;
        let label = tree.predict(&fv);
        entry.class = Some(label);
        entry.provisional = false;
        self.stats.classifications += 1;
        self.push_log(
            now,
            LogKind::Classified,
            key,
            Some(label),
            None,
            format!("mean_fwd_pkt_len={:.1}", fv.mean_fwd_pkt_len),
        );
        self.probe_all(view);
        self.assign_path(key, label, LogKind::Assigned, String::new(), now, view, actions)
    }

    /// Picks a feasible path by class interval, reserving the class minimum,
    /// or falls back to the cheapest path with no reservation.
    #[allow(clippy::too_many_arguments)]
    fn assign_path(
        &mut self,
        key: FlowKey,
        label: ClassLabel,
        kind: LogKind,
        reason: String,
        now: SimTime,
        view: &dyn NetworkView,
        actions: &mut Vec<Action>,
    ) -> Result<(), ControllerError> {
        let paths = self.k_paths(key)?;
        if paths.is_empty() {
            self.stats.unreachable += 1;
            self.push_log(now, LogKind::Unreachable, key, Some(label), None, reason);
            return Ok(());
        }
        let class = *self.cfg.classes.get(label);
        let feasible = feasible_paths(&paths, &class);
        let mut chosen: Option<(Path, usize)> = None;
        if let Some(start) = assign_index(label, feasible.len(), ClassLabel::COUNT) {
            for (idx, p) in feasible.iter().enumerate().skip(start) {
                if self.links.reserve_path(&p.edges, class.min_bw).is_ok() {
                    chosen = Some(((*p).clone(), idx));
                    break;
                }
            }
        }
        let n_fp = feasible.len();
        let entry = self.flows.get_mut(&key).expect("caller checked");
        let (path, kind, reason) = match chosen {
            Some((path, idx)) => {
                entry.reserved_bw = class.min_bw;
                entry.reserved_edges = path.edges.clone();
                entry.best_effort = false;
                let sep = if reason.is_empty() { "" } else { ";" };
                (path, kind, format!("{reason}{sep}feasible={n_fp};index={idx}"))
            }
            None => {
                self.stats.fallbacks += 1;
                entry.reserved_bw = 0.0;
                entry.reserved_edges.clear();
                entry.best_effort = true;
                let sep = if reason.is_empty() { "" } else { ";" };
                (paths[0].clone(), LogKind::Fallback, format!("{reason}{sep}feasible={n_fp}"))
            }
        };
        entry.current_path = path.clone();
        self.links.refresh_costs();
        self.install_assigned(key, &path.edges, now, view, actions)?;
        self.push_log(now, kind, key, Some(label), Some(path.nodes), reason);
        Ok(())
    }

    /// Writes assigned-priority rules on every switch of the path, the source
    /// included, and schedules the recheck and expiry.
    fn install_assigned(
        &mut self,
        key: FlowKey,
        edges: &[EdgeId],
        now: SimTime,
        view: &dyn NetworkView,
        actions: &mut Vec<Action>,
    ) -> Result<(), ControllerError> {
        let install_ts = now + self.control_latency;
        let egress = self.egress_edge(key.dst)?;
        let topo = self.links.topology();
        let mut switch = topo.attachment(key.src)?;
        let mut hops: Vec<(NodeId, EdgeId)> = Vec::with_capacity(edges.len() + 1);
        for e in edges {
            hops.push((switch, *e));
            switch = topo.edge(*e).to;
        }
        hops.push((switch, egress));
        for (sw, next_hop) in hops {
            self.rules.install(FlowRule {
                switch: sw,
                key,
                next_hop,
                priority: PRIORITY_ASSIGNED,
                hard_timeout: self.hard_timeout,
                install_ts,
            });
        }
        let delivered = view.delivered_bytes(&key);
        let entry = self.flows.get_mut(&key).expect("caller checked");
        entry.install_ts = install_ts;
        entry.generation += 1;
        entry.mark = (now, delivered);
        let expiry = install_ts + self.hard_timeout;
        if self.mode == Mode::Aware {
            actions.push(Action::ScheduleEpochCheck {
                key,
                at: expiry.saturating_sub(self.check_offset),
                generation: entry.generation,
            });
        }
        actions.push(Action::ScheduleExpiry { at: expiry });
        Ok(())
    }

    fn release(&mut self, key: FlowKey) -> Result<(), ControllerError> {
        if let Some(entry) = self.flows.get_mut(&key) {
            if !entry.reserved_edges.is_empty() {
                self.links.release_path(&entry.reserved_edges, entry.reserved_bw)?;
            }
            entry.reserved_edges.clear();
            entry.reserved_bw = 0.0;
        }
        Ok(())
    }

    /// Next hop for a packet of `key` sitting at `switch`: along the current
    /// path when the switch is on it, otherwise the cheapest detour.
    fn next_hop(&mut self, key: FlowKey, switch: NodeId, now: SimTime) -> Result<Option<EdgeId>, ControllerError> {
        let topo = self.links.topology();
        let dst_sw = topo.attachment(key.dst)?;
        if switch == dst_sw {
            return Ok(Some(self.egress_edge(key.dst)?));
        }
        if let Some(entry) = self.flows.get(&key) {
            if let Some(pos) = entry.current_path.position(switch) {
                if let Some(e) = entry.current_path.edges.get(pos) {
                    return Ok(Some(*e));
                }
            }
        }
        let none_e = HashSet::new();
        let none_n = HashSet::new();
        let Some(detour) = dijkstra(&self.links, switch, dst_sw, &none_e, &none_n)? else {
            return Ok(None);
        };
        self.stats.detours += 1;
        let class = self.flows.get(&key).and_then(|e| e.class);
        let first = detour.edges[0];
        self.push_log(now, LogKind::Detour, key, class, Some(detour.nodes), String::new());
        Ok(Some(first))
    }

    fn push_log(
        &mut self,
        time: SimTime,
        kind: LogKind,
        key: FlowKey,
        class: Option<ClassLabel>,
        path: Option<Vec<NodeId>>,
        reason: String,
    ) {
        self.log.push(LogEvent {
            time,
            kind,
            key,
            class,
            path,
            reason,
        });
    }
}
