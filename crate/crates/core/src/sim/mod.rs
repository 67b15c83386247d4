//! Discrete-event network simulation.
//!
//! Every directed link has an output port modeled as a FIFO with a byte
//! limit: a packet waits behind the port's backlog, is serialized at link
//! capacity, then propagates for the link's base latency. Switches forward by
//! the controller's flow tables; a packet with no matching rule is handed to
//! the controller over a control channel with fixed one-way latency and is
//! released wherever the controller says.
//!
//! Acknowledgements for AIMD flows travel out of band and arrive one
//! accumulated propagation delay after delivery. Events run in
//! `(time, insertion sequence)` order, so a run is a pure function of its
//! inputs.

pub mod metrics;
pub mod traffic;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controller::log::render_log;
use crate::controller::{Action, Controller, ControllerError, ControllerStats, NetworkView, ProbeSample};
use crate::flow::{ClassLabel, Direction, FlowId, FlowKey, PacketRecord, Transport};
use crate::time::SimTime;
use crate::topology::{EdgeId, NodeId};

use self::metrics::{FlowMetrics, MetricRow};
use self::traffic::{AimdEvent, AimdState, TrafficKind, TrafficSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("flow {flow}: {message}")]
    InvalidTraffic { flow: u64, message: String },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Seconds.
    pub duration: f64,
    /// Metric interval, seconds.
    pub interval: f64,
    /// Per-port tail-drop limit, bytes.
    pub queue_limit: u64,
    /// Packets that miss a rule at a non-source switch go to the controller
    /// instead of being dropped.
    pub buffer_on_miss: bool,
    /// Check conservation invariants after every event.
    pub check_invariants: bool,
    pub max_hops: u16,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 1000.0,
            interval: 100.0,
            queue_limit: 256 * 1024,
            buffer_on_miss: true,
            check_invariants: false,
            max_hops: 64,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.interval.is_finite() && self.interval > 0.0) {
            return bad("interval must be positive");
        }
        if self.queue_limit == 0 {
            return bad("queue_limit must be positive");
        }
        if self.max_hops == 0 {
            return bad("max_hops must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    pub sent: u64,
    pub delivered: u64,
    /// Tail drops at full ports.
    pub dropped_queue: u64,
    /// Packets that reached a switch with no rule while buffering was off.
    pub dropped_no_rule: u64,
    pub dropped_unreachable: u64,
    pub dropped_ttl: u64,
    /// Delivery would fall after the end of the run.
    pub in_flight_end: u64,
    /// Deliveries with a lower sequence number than an earlier delivery of
    /// the same flow.
    pub reordered: u64,
}

impl Totals {
    pub fn dropped(&self) -> u64 {
        self.dropped_queue + self.dropped_no_rule + self.dropped_unreachable + self.dropped_ttl
    }

    /// Losses caused by forwarding state rather than congestion.
    pub fn forwarding_losses(&self) -> u64 {
        self.dropped_no_rule + self.dropped_unreachable + self.dropped_ttl
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSummary {
    pub flow_id: FlowId,
    pub key: FlowKey,
    pub class: ClassLabel,
    pub predicted: Option<ClassLabel>,
    pub transport: Transport,
    pub background: bool,
    pub start: f64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub delivered_bytes: u64,
    /// Delivered bits over the flow's active time.
    pub throughput_bps: f64,
    /// Mean over intervals where jitter is defined.
    pub mean_jitter: Option<f64>,
    pub mean_delay: Option<f64>,
    pub loss_frac: f64,
    pub interval_throughput: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    /// Metric rows for every non-background flow, by interval then flow id.
    pub rows: Vec<MetricRow>,
    pub flows: Vec<FlowSummary>,
    pub totals: Totals,
    pub controller: ControllerStats,
    /// Rendered controller event log.
    pub event_log: String,
    pub events_processed: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    FlowStart(u32),
    Send { flow: u32, token: u32 },
    FlowEnd(u32),
    Arrive { pkt: u32, switch: NodeId },
    PacketIn { pkt: u32, switch: NodeId },
    PacketOut { pkt: u32, edge: EdgeId },
    Ack { flow: u32, seq: u64, gen: u32, sent_at: SimTime },
    Loss { flow: u32, seq: u64, gen: u32 },
    EpochCheck { key: FlowKey, generation: u64 },
    Expiry,
    Probe,
}

struct Event {
    time: SimTime,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Min-heap on (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Clone)]
struct Port {
    capacity: f64,
    latency: SimTime,
    busy_until: SimTime,
    to: NodeId,
    to_host: bool,
}

impl Port {
    fn backlog_bytes(&self, now: SimTime) -> f64 {
        self.busy_until.saturating_sub(now).as_secs() * self.capacity / 8.0
    }

    /// Queues `size` bytes; returns the arrival time at the far end, or
    /// `None` on tail drop.
    fn enqueue(&mut self, size: u32, now: SimTime, limit: u64) -> Option<SimTime> {
        if self.backlog_bytes(now) + size as f64 > limit as f64 {
            return None;
        }
        let start = self.busy_until.max(now);
        self.busy_until = start + SimTime::transmission(size, self.capacity);
        Some(self.busy_until + self.latency)
    }
}

/// The part of the world the controller may observe.
struct Fabric {
    ports: Vec<Port>,
    delivered_bytes: Vec<u64>,
    key_index: BTreeMap<FlowKey, u32>,
    control_latency: f64,
    now: SimTime,
}

impl NetworkView for Fabric {
    fn probe(&self, edge: EdgeId) -> ProbeSample {
        let port = &self.ports[edge.index()];
        let link = port.latency.as_secs() + port.busy_until.saturating_sub(self.now).as_secs();
        let c = self.control_latency;
        ProbeSample {
            t_total: c + link + c,
            t_s1: 2.0 * c,
            t_s2: 2.0 * c,
        }
    }

    fn delivered_bytes(&self, key: &FlowKey) -> u64 {
        self.key_index
            .get(key)
            .map_or(0, |i| self.delivered_bytes[*i as usize])
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    flow: u32,
    seq: u64,
    gen: u32,
    size: u32,
    sent_at: SimTime,
    /// Propagation delay accumulated so far.
    prop: SimTime,
    hops: u16,
}

struct FlowState {
    spec: TrafficSpec,
    key: FlowKey,
    src_switch: NodeId,
    access: EdgeId,
    rng: ChaCha8Rng,
    cbr_gap: f64,
    aimd: Option<AimdState>,
    next_seq: u64,
    token: u32,
    waiting: bool,
    start: SimTime,
    end: SimTime,
    finished: bool,
    sent: u64,
    delivered: u64,
    dropped: u64,
    beyond: u64,
    live: u64,
    last_delivered_seq: Option<u64>,
    metrics: FlowMetrics,
}

#[derive(Debug, Clone, Copy)]
enum DropKind {
    Queue,
    NoRule,
    Unreachable,
    Ttl,
}

struct Sim {
    cfg: SimConfig,
    controller: Controller,
    fabric: Fabric,
    flows: Vec<FlowState>,
    packets: Vec<Packet>,
    free: Vec<u32>,
    live: u64,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: SimTime,
    end: SimTime,
    control: SimTime,
    interval: SimTime,
    expiries: BTreeSet<SimTime>,
    totals: Totals,
    events: u64,
    violations: u64,
    first_violation: Option<String>,
}

/// Runs the traffic over the controller's network for `cfg.duration`
/// seconds. `control_latency` is the controller-to-switch one-way delay in
/// seconds and must match the one the controller was built with.
pub fn run(
    controller: Controller,
    traffic: &[TrafficSpec],
    cfg: &SimConfig,
    control_latency: f64,
    seed: u64,
) -> Result<SimReport, SimError> {
    cfg.validate()?;
    if !(control_latency.is_finite() && control_latency > 0.0) {
        return Err(SimError::InvalidConfig("control latency must be positive".into()));
    }
    let mut sim = Sim::new(controller, traffic, cfg, control_latency, seed)?;
    sim.run()?;
    Ok(sim.finish())
}

impl Sim {
    fn new(
        mut controller: Controller,
        traffic: &[TrafficSpec],
        cfg: &SimConfig,
        control_latency: f64,
        seed: u64,
    ) -> Result<Sim, SimError> {
        let topo = controller.topology();
        let ports: Vec<Port> = topo
            .edges()
            .map(|(_, e)| Port {
                capacity: e.capacity,
                latency: SimTime::from_secs(e.base_latency),
                busy_until: SimTime::ZERO,
                to: e.to,
                to_host: topo.is_host(e.to),
            })
            .collect();
        let end = SimTime::from_secs(cfg.duration);
        let interval = SimTime::from_secs(cfg.interval);
        let n_intervals = cfg.duration.div_euclid(cfg.interval) as usize
            + usize::from(cfg.duration.rem_euclid(cfg.interval) > 0.0);

        let mut flows = Vec::with_capacity(traffic.len());
        let mut key_index = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for spec in traffic {
            let err = |m: String| SimError::InvalidTraffic {
                flow: spec.flow_id.0,
                message: m,
            };
            if !ids.insert(spec.flow_id) {
                return Err(err("duplicate flow id".into()));
            }
            if !topo.is_host(spec.src) || !topo.is_host(spec.dst) || spec.src == spec.dst {
                return Err(err("endpoints must be two distinct hosts".into()));
            }
            if spec.packet_size == 0 {
                return Err(err("packet size must be positive".into()));
            }
            if !(spec.start.is_finite() && spec.start >= 0.0) {
                return Err(err("start must be finite and non-negative".into()));
            }
            if !(spec.duration.is_finite() && spec.duration > 0.0) {
                return Err(err("duration must be positive".into()));
            }
            let access = topo.access_edge(spec.src).map_err(|e| err(e.to_string()))?;
            let access_cap = topo.edge(access).capacity;
            let cbr_gap = match &spec.kind {
                TrafficKind::Cbr { rate, dither } => {
                    if !(rate.is_finite() && *rate > 0.0 && *rate <= access_cap) {
                        return Err(err(format!("rate must be in (0, {access_cap}]")));
                    }
                    if !(0.0..1.0).contains(dither) {
                        return Err(err("dither must be in [0, 1)".into()));
                    }
                    spec.packet_size as f64 * 8.0 / rate
                }
                TrafficKind::Aimd { max_window } => {
                    if max_window.is_some_and(|m| !(m >= 1.0)) {
                        return Err(err("max_window must be at least 1".into()));
                    }
                    0.0
                }
            };
            let key = FlowKey::new(spec.src, spec.dst, spec.flow_id);
            key_index.insert(key, flows.len() as u32);
            let start = SimTime::from_secs(spec.start);
            flows.push(FlowState {
                key,
                src_switch: topo.attachment(spec.src).map_err(|e| err(e.to_string()))?,
                access,
                rng: ChaCha8Rng::seed_from_u64(
                    seed ^ spec.rng_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ),
                cbr_gap,
                aimd: None,
                next_seq: 0,
                token: 0,
                waiting: false,
                start,
                end: SimTime::from_secs(spec.start + spec.duration).min(end),
                finished: false,
                sent: 0,
                delivered: 0,
                dropped: 0,
                beyond: 0,
                live: 0,
                last_delivered_seq: None,
                metrics: FlowMetrics::new(interval, n_intervals),
                spec: spec.clone(),
            });
        }

        for f in &flows {
            if let Some(route) = &f.spec.pinned {
                let rate = match f.spec.kind {
                    TrafficKind::Cbr { rate, .. } => rate,
                    TrafficKind::Aimd { .. } => 0.0,
                };
                controller.pin_flow(f.key, &route.switches, rate, route.reserve, SimTime::ZERO)?;
            }
        }

        let n = flows.len();
        Ok(Sim {
            cfg: cfg.clone(),
            controller,
            fabric: Fabric {
                ports,
                delivered_bytes: vec![0; n],
                key_index,
                control_latency,
                now: SimTime::ZERO,
            },
            flows,
            packets: Vec::new(),
            free: Vec::new(),
            live: 0,
            heap: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            end,
            control: SimTime::from_secs(control_latency),
            interval,
            expiries: BTreeSet::new(),
            totals: Totals::default(),
            events: 0,
            violations: 0,
            first_violation: None,
        })
    }

    fn push(&mut self, time: SimTime, ev: Ev) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.heap.push(Event {
            time: time.max(self.now),
            seq: self.seq,
            ev,
        });
        self.seq += 1;
    }

    fn violation(&mut self, message: String) {
        self.violations += 1;
        if self.first_violation.is_none() {
            self.first_violation = Some(format!("t={}: {message}", self.now));
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        for i in 0..self.flows.len() {
            let start = self.flows[i].start;
            if start < self.end {
                self.push(start, Ev::FlowStart(i as u32));
            }
        }
        let probe_period = SimTime::from_secs(self.controller.config().refresh_epoch);
        self.push(probe_period, Ev::Probe);

        while let Some(Event { time, ev, .. }) = self.heap.pop() {
            if time >= self.end {
                break;
            }
            if time < self.now {
                self.violation(format!("event at {time} after clock reached {}", self.now));
            }
            self.now = time;
            self.fabric.now = time;
            self.events += 1;
            let touches_controller = matches!(
                ev,
                Ev::PacketIn { .. } | Ev::EpochCheck { .. } | Ev::Expiry | Ev::Probe
            );
            self.dispatch(ev)?;
            if self.cfg.check_invariants {
                self.check_conservation();
                if touches_controller {
                    if let Err(m) = self.controller.check_reservations() {
                        self.violation(m);
                    }
                }
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, ev: Ev) -> Result<(), SimError> {
        let now = self.now;
        match ev {
            Ev::FlowStart(f) => {
                let flow = &mut self.flows[f as usize];
                if let TrafficKind::Aimd { max_window } = flow.spec.kind {
                    flow.aimd = Some(AimdState::new(max_window, now));
                }
                let end = flow.end;
                self.push(now, Ev::Send { flow: f, token: 0 });
                self.push(end, Ev::FlowEnd(f));
            }
            Ev::Send { flow, token } => self.on_send(flow, token),
            Ev::FlowEnd(f) => {
                let flow = &mut self.flows[f as usize];
                flow.finished = true;
                let key = flow.key;
                self.controller.flow_finished(key, now);
            }
            Ev::Arrive { pkt, switch } => self.on_arrive(pkt, switch),
            Ev::PacketIn { pkt, switch } => self.on_packet_in(pkt, switch)?,
            Ev::PacketOut { pkt, edge } => self.transmit(pkt, edge),
            Ev::Ack {
                flow,
                seq,
                gen,
                sent_at,
            } => {
                let rtt = now.saturating_sub(sent_at).as_secs();
                self.feedback(flow, AimdEvent::Ack { seq, generation: gen, rtt });
            }
            Ev::Loss { flow, seq, gen } => {
                self.feedback(flow, AimdEvent::Loss { seq, generation: gen });
            }
            Ev::EpochCheck { key, generation } => {
                let actions = self.controller.epoch_check(key, generation, now, &self.fabric)?;
                self.apply_actions(None, actions);
            }
            Ev::Expiry => {
                self.expiries.remove(&now);
                self.controller.expire_rules(now)?;
            }
            Ev::Probe => {
                self.controller.probe_all(&self.fabric);
                let period = SimTime::from_secs(self.controller.config().refresh_epoch);
                self.push(now + period, Ev::Probe);
            }
        }
        Ok(())
    }

    fn on_send(&mut self, f: u32, token: u32) {
        let now = self.now;
        let flow = &mut self.flows[f as usize];
        if token != flow.token || flow.finished || now >= flow.end {
            return;
        }
        match flow.spec.kind {
            TrafficKind::Cbr { dither, .. } => {
                let seq = flow.next_seq;
                flow.next_seq += 1;
                let factor = if dither > 0.0 {
                    flow.rng.random_range(1.0 - dither..=1.0 + dither)
                } else {
                    1.0
                };
                let gap = SimTime::from_secs(flow.cbr_gap * factor).max(SimTime(1));
                self.emit(f, seq, 0);
                self.push(now + gap, Ev::Send { flow: f, token });
            }
            TrafficKind::Aimd { .. } => {
                let aimd = flow.aimd.as_mut().expect("started");
                if aimd.timed_out(now) {
                    aimd.apply(AimdEvent::Timeout, now);
                }
                if aimd.can_send() {
                    let seq = aimd.on_send(now);
                    let gen = aimd.generation;
                    let gap = aimd.pacing_interval();
                    flow.waiting = false;
                    self.emit(f, seq, gen);
                    self.push(now + gap, Ev::Send { flow: f, token });
                } else {
                    flow.waiting = true;
                    flow.token = flow.token.wrapping_add(1);
                    let (wake, token) = (aimd.timeout_deadline(), flow.token);
                    self.push(wake, Ev::Send { flow: f, token });
                }
            }
        }
    }

    fn feedback(&mut self, f: u32, event: AimdEvent) {
        let now = self.now;
        let flow = &mut self.flows[f as usize];
        if flow.finished {
            return;
        }
        let Some(aimd) = flow.aimd.as_mut() else {
            return;
        };
        aimd.apply(event, now);
        if flow.waiting {
            flow.waiting = false;
            flow.token = flow.token.wrapping_add(1);
            let token = flow.token;
            self.push(now, Ev::Send { flow: f, token });
        }
    }

    fn alloc(&mut self, p: Packet) -> u32 {
        self.live += 1;
        match self.free.pop() {
            Some(i) => {
                self.packets[i as usize] = p;
                i
            }
            None => {
                self.packets.push(p);
                (self.packets.len() - 1) as u32
            }
        }
    }

    fn release(&mut self, pkt: u32) -> Packet {
        self.live -= 1;
        self.free.push(pkt);
        let p = self.packets[pkt as usize];
        self.flows[p.flow as usize].live -= 1;
        p
    }

    fn emit(&mut self, f: u32, seq: u64, gen: u32) {
        let now = self.now;
        let flow = &mut self.flows[f as usize];
        flow.sent += 1;
        flow.live += 1;
        let access = flow.access;
        let size = flow.spec.packet_size;
        self.totals.sent += 1;
        let pkt = self.alloc(Packet {
            flow: f,
            seq,
            gen,
            size,
            sent_at: now,
            prop: SimTime::ZERO,
            hops: 0,
        });
        self.transmit(pkt, access);
    }

    fn transmit(&mut self, pkt: u32, edge: EdgeId) {
        let now = self.now;
        let limit = self.cfg.queue_limit;
        let size = self.packets[pkt as usize].size;
        let port = &mut self.fabric.ports[edge.index()];
        let Some(arrival) = port.enqueue(size, now, limit) else {
            self.drop_packet(pkt, DropKind::Queue);
            return;
        };
        let (to, to_host, latency) = (port.to, port.to_host, port.latency);
        let p = &mut self.packets[pkt as usize];
        p.prop += latency;
        p.hops += 1;
        if to_host {
            self.deliver(pkt, arrival);
        } else {
            self.push(arrival, Ev::Arrive { pkt, switch: to });
        }
    }

    fn deliver(&mut self, pkt: u32, at: SimTime) {
        let p = self.release(pkt);
        let flow = &mut self.flows[p.flow as usize];
        if at >= self.end {
            flow.beyond += 1;
            self.totals.in_flight_end += 1;
            return;
        }
        flow.delivered += 1;
        self.fabric.delivered_bytes[p.flow as usize] += p.size as u64;
        flow.metrics.delivered(at, p.sent_at, p.size);
        if flow.last_delivered_seq.is_some_and(|s| p.seq < s) {
            self.totals.reordered += 1;
        } else {
            flow.last_delivered_seq = Some(p.seq);
        }
        self.totals.delivered += 1;
        if flow.aimd.is_some() {
            self.push(
                at + p.prop,
                Ev::Ack {
                    flow: p.flow,
                    seq: p.seq,
                    gen: p.gen,
                    sent_at: p.sent_at,
                },
            );
        }
    }

    fn drop_packet(&mut self, pkt: u32, kind: DropKind) {
        let now = self.now;
        let p = self.release(pkt);
        match kind {
            DropKind::Queue => self.totals.dropped_queue += 1,
            DropKind::NoRule => self.totals.dropped_no_rule += 1,
            DropKind::Unreachable => self.totals.dropped_unreachable += 1,
            DropKind::Ttl => self.totals.dropped_ttl += 1,
        }
        let flow = &mut self.flows[p.flow as usize];
        flow.dropped += 1;
        flow.metrics.dropped(now);
        if let Some(aimd) = &flow.aimd {
            // The sender hears about the gap roughly one round trip later.
            let notice = SimTime::from_secs(aimd.srtt.unwrap_or(traffic::INITIAL_RTO));
            self.push(
                now + notice,
                Ev::Loss {
                    flow: p.flow,
                    seq: p.seq,
                    gen: p.gen,
                },
            );
        }
    }

    fn on_arrive(&mut self, pkt: u32, switch: NodeId) {
        let p = self.packets[pkt as usize];
        if p.hops > self.cfg.max_hops {
            self.drop_packet(pkt, DropKind::Ttl);
            return;
        }
        let flow = &self.flows[p.flow as usize];
        let key = flow.key;
        let is_source = switch == flow.src_switch;
        match self.controller.rules().lookup(switch, &key, self.now) {
            Some(rule) => {
                let hop = rule.next_hop;
                self.transmit(pkt, hop);
            }
            None if is_source || self.cfg.buffer_on_miss => {
                self.push(self.now + self.control, Ev::PacketIn { pkt, switch });
            }
            None => self.drop_packet(pkt, DropKind::NoRule),
        }
    }

    fn on_packet_in(&mut self, pkt: u32, switch: NodeId) -> Result<(), SimError> {
        let now = self.now;
        let p = self.packets[pkt as usize];
        let flow = &self.flows[p.flow as usize];
        let record = PacketRecord {
            timestamp: now.saturating_sub(self.control).as_secs(),
            src: flow.spec.src,
            dst: flow.spec.dst,
            size: p.size,
            flow_id: flow.spec.flow_id,
            direction: Direction::Forward,
            transport: flow.spec.transport(),
        };
        let actions = self
            .controller
            .handle_packet_in(switch, &record, now, &self.fabric)?;
        self.apply_actions(Some(pkt), actions);
        Ok(())
    }

    fn apply_actions(&mut self, pkt: Option<u32>, actions: Vec<Action>) {
        let now = self.now;
        for a in actions {
            match a {
                Action::Forward { next_hop, .. } => {
                    if let Some(pkt) = pkt {
                        self.push(now + self.control, Ev::PacketOut { pkt, edge: next_hop });
                    }
                }
                Action::Drop { .. } => {
                    if let Some(pkt) = pkt {
                        self.drop_packet(pkt, DropKind::Unreachable);
                    }
                }
                Action::ScheduleEpochCheck {
                    key,
                    at,
                    generation,
                } => self.push(at.max(now), Ev::EpochCheck { key, generation }),
                Action::ScheduleExpiry { at } => {
                    let at = at.max(now);
                    if self.expiries.insert(at) {
                        self.push(at, Ev::Expiry);
                    }
                }
            }
        }
    }

    fn check_conservation(&mut self) {
        let t = self.totals;
        if t.sent != t.delivered + t.dropped() + t.in_flight_end + self.live {
            self.violation(format!(
                "packet conservation: sent {} != delivered {} + dropped {} + beyond {} + live {}",
                t.sent,
                t.delivered,
                t.dropped(),
                t.in_flight_end,
                self.live
            ));
        }
    }

    fn finish(mut self) -> SimReport {
        let end_s = self.end.as_secs();
        for i in 0..self.flows.len() {
            let f = &self.flows[i];
            if f.sent != f.delivered + f.dropped + f.beyond + f.live {
                let m = format!("flow {}: per-flow conservation broken", f.spec.flow_id.0);
                self.violation(m);
            }
        }
        if self.cfg.check_invariants {
            self.check_conservation();
        }
        let interval_s = self.interval.as_secs();
        let mut rows = Vec::new();
        let n_intervals = self.flows.first().map_or(0, |f| f.metrics.intervals().len());
        for i in 0..n_intervals {
            let start = i as f64 * interval_s;
            let length = (end_s - start).min(interval_s);
            let mut ordered: Vec<&FlowState> = self.flows.iter().filter(|f| !f.spec.is_background()).collect();
            ordered.sort_by_key(|f| f.spec.flow_id);
            for f in ordered {
                rows.push(MetricRow::from_acc(
                    start,
                    length,
                    f.spec.flow_id,
                    f.spec.class,
                    &f.metrics.intervals()[i],
                ));
            }
        }
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let accs = f.metrics.intervals();
                let interval_throughput: Vec<f64> = accs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let start = j as f64 * interval_s;
                        a.delivered_bytes as f64 * 8.0 / (end_s - start).min(interval_s)
                    })
                    .collect();
                let jitters: Vec<f64> = accs
                    .iter()
                    .filter_map(|a| {
                        MetricRow::from_acc(0.0, 1.0, f.spec.flow_id, f.spec.class, a).jitter_s
                    })
                    .collect();
                let delay_sum: f64 = accs.iter().map(|a| a.delay_sum).sum();
                let active = (f.end.as_secs() - f.start.as_secs()).max(0.0);
                let bytes = self.fabric.delivered_bytes[i];
                let attempts = f.delivered + f.dropped;
                FlowSummary {
                    flow_id: f.spec.flow_id,
                    key: f.key,
                    class: f.spec.class,
                    predicted: self.controller.flow(&f.key).and_then(|e| e.class),
                    transport: f.spec.transport(),
                    background: f.spec.is_background(),
                    start: f.start.as_secs(),
                    sent: f.sent,
                    delivered: f.delivered,
                    dropped: f.dropped,
                    in_flight: f.beyond + f.live,
                    delivered_bytes: bytes,
                    throughput_bps: if active > 0.0 {
                        bytes as f64 * 8.0 / active
                    } else {
                        0.0
                    },
                    mean_jitter: (!jitters.is_empty())
                        .then(|| jitters.iter().sum::<f64>() / jitters.len() as f64),
                    mean_delay: (f.delivered > 0).then(|| delay_sum / f.delivered as f64),
                    loss_frac: if attempts == 0 {
                        0.0
                    } else {
                        f.dropped as f64 / attempts as f64
                    },
                    interval_throughput,
                }
            })
            .collect();
        SimReport {
            rows,
            flows,
            totals: self.totals,
            controller: self.controller.stats(),
            event_log: render_log(self.controller.log(), self.controller.topology()),
            events_processed: self.events,
            violations: self.violations,
            first_violation: self.first_violation,
        }
    }
}
