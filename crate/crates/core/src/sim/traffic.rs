//! Traffic sources: constant bit rate (UDP-like) and a window-based AIMD
//! model (TCP-like).

use crate::flow::{ClassLabel, FlowId, Transport};
use crate::time::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub enum TrafficKind {
    /// Fixed rate in bits/second. Each gap is scaled by a factor drawn
    /// uniformly from `[1 - dither, 1 + dither]`.
    Cbr { rate: f64, dither: f64 },
    /// Window-limited sender; `max_window` caps the window in packets.
    Aimd { max_window: Option<f64> },
}

impl TrafficKind {
    pub fn transport(&self) -> Transport {
        match self {
            TrafficKind::Cbr { .. } => Transport::Udp,
            TrafficKind::Aimd { .. } => Transport::Tcp,
        }
    }
}

/// Fixed routing for a flow that bypasses path selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedRoute {
    pub switches: Vec<NodeId>,
    /// Whether the flow's rate is reserved on the route.
    pub reserve: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub flow_id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: TrafficKind,
    /// Ground-truth class, used for reporting only.
    pub class: ClassLabel,
    pub packet_size: u32,
    /// Seconds.
    pub start: f64,
    /// Seconds.
    pub duration: f64,
    pub rng_seed: u64,
    /// Background flows are routed on fixed paths and left out of per-class
    /// summaries.
    pub pinned: Option<PinnedRoute>,
}

impl TrafficSpec {
    pub fn transport(&self) -> Transport {
        self.kind.transport()
    }

    pub fn is_background(&self) -> bool {
        self.pinned.is_some()
    }
}

/// Congestion state of one AIMD sender.
#[derive(Debug, Clone, PartialEq)]
pub struct AimdState {
    /// Congestion window, packets.
    pub cwnd: f64,
    pub max_window: Option<f64>,
    /// Smoothed round-trip time, seconds; `None` until the first sample.
    pub srtt: Option<f64>,
    /// Packets sent and neither acknowledged nor known lost.
    pub inflight: u64,
    pub next_seq: u64,
    /// Losses at or below this sequence number belong to a window that was
    /// already halved.
    pub recovery_point: Option<u64>,
    /// Bumped on timeout; feedback for older packets no longer changes
    /// `inflight`.
    pub generation: u32,
    pub last_progress: SimTime,
}

pub const INITIAL_WINDOW: f64 = 4.0;
/// Retransmission timeout before any RTT sample, seconds.
pub const INITIAL_RTO: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AimdEvent {
    Ack { seq: u64, generation: u32, rtt: f64 },
    Loss { seq: u64, generation: u32 },
    Timeout,
}

impl AimdState {
    pub fn new(max_window: Option<f64>, now: SimTime) -> Self {
        AimdState {
            cwnd: INITIAL_WINDOW,
            max_window,
            srtt: None,
            inflight: 0,
            next_seq: 0,
            recovery_point: None,
            generation: 0,
            last_progress: now,
        }
    }

    fn window(&self) -> f64 {
        match self.max_window {
            Some(m) => self.cwnd.min(m),
            None => self.cwnd,
        }
    }

    pub fn can_send(&self) -> bool {
        (self.inflight as f64) < self.window().floor().max(1.0)
    }

    /// Registers a transmission and returns its sequence number.
    pub fn on_send(&mut self, now: SimTime) -> u64 {
        if self.inflight == 0 {
            self.last_progress = now;
        }
        self.inflight += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    /// Gap between paced transmissions: one window per smoothed RTT.
    pub fn pacing_interval(&self) -> SimTime {
        match self.srtt {
            Some(rtt) => SimTime::from_secs(rtt / self.window()),
            None => SimTime::ZERO,
        }
    }

    pub fn rto(&self) -> SimTime {
        SimTime::from_secs(self.srtt.map_or(INITIAL_RTO, |r| 2.0 * r))
    }

    /// When a stalled window gives up on its outstanding packets.
    pub fn timeout_deadline(&self) -> SimTime {
        self.last_progress + self.rto()
    }

    pub fn timed_out(&self, now: SimTime) -> bool {
        self.inflight > 0 && now >= self.timeout_deadline()
    }

    fn halve(&mut self) {
        self.cwnd = (self.cwnd / 2.0).max(1.0);
        self.recovery_point = self.next_seq.checked_sub(1);
    }

    pub fn apply(&mut self, event: AimdEvent, now: SimTime) {
        match event {
            AimdEvent::Ack {
                seq: _,
                generation,
                rtt,
            } => {
                if generation == self.generation {
                    self.inflight = self.inflight.saturating_sub(1);
                }
                self.srtt = Some(match self.srtt {
                    Some(s) => 0.875 * s + 0.125 * rtt,
                    None => rtt,
                });
                self.cwnd += 1.0 / self.cwnd;
                if let Some(m) = self.max_window {
                    self.cwnd = self.cwnd.min(m);
                }
                self.last_progress = now;
            }
            AimdEvent::Loss { seq, generation } => {
                if generation == self.generation {
                    self.inflight = self.inflight.saturating_sub(1);
                }
                if self.recovery_point.is_none_or(|rp| seq > rp) {
                    self.halve();
                }
                self.last_progress = now;
            }
            AimdEvent::Timeout => {
                self.halve();
                self.inflight = 0;
                self.generation = self.generation.wrapping_add(1);
                self.last_progress = now;
            }
        }
    }
}

/// Pure form of [`AimdState::apply`].
pub fn aimd_step(state: &AimdState, event: AimdEvent, now: SimTime) -> AimdState {
    let mut next = state.clone();
    next.apply(event, now);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(seq: u64, rtt: f64) -> AimdEvent {
        AimdEvent::Ack {
            seq,
            generation: 0,
            rtt,
        }
    }

    #[test]
    fn window_grows_one_packet_per_window_of_acks() {
        let mut s = AimdState::new(None, SimTime::ZERO);
        let start = s.cwnd;
        // One RTT's worth of acks at window w adds about one packet.
        let w = s.cwnd as u64;
        for i in 0..w {
            s.on_send(SimTime::ZERO);
            s = aimd_step(&s, ack(i, 0.01), SimTime::ZERO);
        }
        assert!((s.cwnd - (start + 1.0)).abs() < 0.15, "cwnd {}", s.cwnd);
        // Linear growth: a window's worth of acks adds about one packet.
        let before = s.cwnd;
        let mut acks = 0.0;
        while acks < 5.0 * before {
            s.on_send(SimTime::ZERO);
            s.apply(ack(0, 0.01), SimTime::ZERO);
            acks += 1.0;
        }
        let growth = s.cwnd - before;
        assert!((3.5..5.5).contains(&growth), "growth {growth}");
    }

    #[test]
    fn single_loss_halves_window() {
        let mut s = AimdState::new(None, SimTime::ZERO);
        s.cwnd = 64.0;
        for _ in 0..64 {
            s.on_send(SimTime::ZERO);
        }
        s.apply(
            AimdEvent::Loss {
                seq: 10,
                generation: 0,
            },
            SimTime::ZERO,
        );
        assert_eq!(s.cwnd, 32.0);
        // Further losses from the same window do not halve again.
        s.apply(
            AimdEvent::Loss {
                seq: 11,
                generation: 0,
            },
            SimTime::ZERO,
        );
        assert_eq!(s.cwnd, 32.0);
        s.on_send(SimTime::ZERO);
        s.apply(
            AimdEvent::Loss {
                seq: 64,
                generation: 0,
            },
            SimTime::ZERO,
        );
        assert_eq!(s.cwnd, 16.0);
    }

    #[test]
    fn timeout_clears_window() {
        let mut s = AimdState::new(None, SimTime::ZERO);
        for _ in 0..4 {
            s.on_send(SimTime::ZERO);
        }
        assert!(!s.can_send());
        assert!(!s.timed_out(SimTime::from_millis(999)));
        assert!(s.timed_out(SimTime::from_millis(1000)));
        s.apply(AimdEvent::Timeout, SimTime::from_millis(1000));
        assert_eq!(s.inflight, 0);
        assert_eq!(s.cwnd, 2.0);
        // A late ack of a packet from before the timeout does not underflow.
        s.apply(ack(0, 0.5), SimTime::from_millis(1001));
        assert_eq!(s.inflight, 0);
        assert!(s.can_send());
    }

    #[test]
    fn pacing_follows_window_over_rtt() {
        let mut s = AimdState::new(None, SimTime::ZERO);
        assert_eq!(s.pacing_interval(), SimTime::ZERO);
        s.srtt = Some(0.02);
        s.cwnd = 10.0;
        assert_eq!(s.pacing_interval(), SimTime::from_secs(0.002));
        s.max_window = Some(5.0);
        assert_eq!(s.pacing_interval(), SimTime::from_secs(0.004));
    }
}
