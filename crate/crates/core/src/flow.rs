//! Flow identity, per-flow running statistics and the classifier feature vector.

use std::fmt;

use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("packet {packet} does not belong to flow {flow}")]
    KeyMismatch { flow: FlowKey, packet: FlowKey },
    #[error("packet timestamp {got} precedes last observed timestamp {last}")]
    OutOfOrder { last: f64, got: f64 },
    #[error("invalid packet: {0}")]
    InvalidPacket(&'static str),
    #[error("need at least 2 forward packets to extract features, have {0}")]
    InsufficientData(u64),
}

/// Opaque per-source flow identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// Transport protocol of a flow. Never used as a classifier feature; the
/// controller only uses it to decide whether the throughput audit applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transport {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub flow_id: FlowId,
}

impl FlowKey {
    pub fn new(src: NodeId, dst: NodeId, flow_id: FlowId) -> Self {
        FlowKey { src, dst, flow_id }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}>{}#{}", self.src.0, self.dst.0, self.flow_id.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// Seconds on the simulation clock.
    pub timestamp: f64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u32,
    pub flow_id: FlowId,
    pub direction: Direction,
    pub transport: Transport,
}

impl PacketRecord {
    /// The key of the flow this packet belongs to, oriented by `direction`.
    pub fn flow_key(&self) -> FlowKey {
        match self.direction {
            Direction::Forward => FlowKey::new(self.src, self.dst, self.flow_id),
            Direction::Backward => FlowKey::new(self.dst, self.src, self.flow_id),
        }
    }
}

/// Single-pass mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for RunningStats {
    fn default() -> Self {
        RunningStats {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Population standard deviation; 0 for fewer than two samples.
    pub fn std_dev(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }

    fn min_or_zero(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.min
        }
    }

    fn max_or_zero(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.max
        }
    }
}

/// Running statistics of one unidirectional flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub first_ts: f64,
    pub last_ts: f64,
    pub fwd_packet_count: u64,
    pub bwd_packet_count: u64,
    pub fwd_byte_count: u64,
    pub bwd_byte_count: u64,
    pub fwd_interarrival: RunningStats,
    pub fwd_length: RunningStats,
    pub bwd_length: RunningStats,
    last_fwd_ts: Option<f64>,
}

impl FlowRecord {
    pub fn new(key: FlowKey) -> Self {
        FlowRecord {
            key,
            first_ts: 0.0,
            last_ts: 0.0,
            fwd_packet_count: 0,
            bwd_packet_count: 0,
            fwd_byte_count: 0,
            bwd_byte_count: 0,
            fwd_interarrival: RunningStats::default(),
            fwd_length: RunningStats::default(),
            bwd_length: RunningStats::default(),
            last_fwd_ts: None,
        }
    }

    pub fn packet_count(&self) -> u64 {
        self.fwd_packet_count + self.bwd_packet_count
    }

    /// Folds one packet into the record.
    pub fn update(&mut self, pkt: &PacketRecord) -> Result<(), FlowError> {
        let pkt_key = pkt.flow_key();
        if pkt_key != self.key {
            return Err(FlowError::KeyMismatch {
                flow: self.key,
                packet: pkt_key,
            });
        }
        if pkt.size == 0 {
            return Err(FlowError::InvalidPacket("size must be positive"));
        }
        if !pkt.timestamp.is_finite() || pkt.timestamp < 0.0 {
            return Err(FlowError::InvalidPacket("timestamp must be finite and non-negative"));
        }
        let empty = self.packet_count() == 0;
        if !empty && pkt.timestamp < self.last_ts {
            return Err(FlowError::OutOfOrder {
                last: self.last_ts,
                got: pkt.timestamp,
            });
        }
        if empty {
            self.first_ts = pkt.timestamp;
        }
        self.last_ts = pkt.timestamp;
        let size = pkt.size as f64;
        match pkt.direction {
            Direction::Forward => {
                if let Some(prev) = self.last_fwd_ts {
                    self.fwd_interarrival.push(pkt.timestamp - prev);
                }
                self.last_fwd_ts = Some(pkt.timestamp);
                self.fwd_packet_count += 1;
                self.fwd_byte_count += pkt.size as u64;
                self.fwd_length.push(size);
            }
            Direction::Backward => {
                self.bwd_packet_count += 1;
                self.bwd_byte_count += pkt.size as u64;
                self.bwd_length.push(size);
            }
        }
        Ok(())
    }

    /// Builds the classifier input from the accumulated statistics.
    pub fn features(&self) -> Result<FeatureVector, FlowError> {
        if self.fwd_packet_count < 2 {
            return Err(FlowError::InsufficientData(self.fwd_packet_count));
        }
        let iat = &self.fwd_interarrival;
        Ok(FeatureVector {
            duration: self.last_ts - self.first_ts,
            mean_fwd_iat: iat.mean,
            std_fwd_iat: iat.std_dev(),
            min_fwd_iat: iat.min_or_zero(),
            max_fwd_iat: iat.max_or_zero(),
            mean_fwd_pkt_len: self.fwd_length.mean,
            mean_bwd_pkt_len: if self.bwd_length.count == 0 {
                0.0
            } else {
                self.bwd_length.mean
            },
        })
    }
}

/// Number of classifier features.
pub const NUM_FEATURES: usize = 7;

/// Per-flow classifier input. Deliberately carries no port or protocol.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub duration: f64,
    pub mean_fwd_iat: f64,
    pub std_fwd_iat: f64,
    pub min_fwd_iat: f64,
    pub max_fwd_iat: f64,
    pub mean_fwd_pkt_len: f64,
    pub mean_bwd_pkt_len: f64,
}

impl FeatureVector {
    pub fn from_array(v: [f64; NUM_FEATURES]) -> Self {
        FeatureVector {
            duration: v[0],
            mean_fwd_iat: v[1],
            std_fwd_iat: v[2],
            min_fwd_iat: v[3],
            max_fwd_iat: v[4],
            mean_fwd_pkt_len: v[5],
            mean_bwd_pkt_len: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.duration,
            self.mean_fwd_iat,
            self.std_fwd_iat,
            self.min_fwd_iat,
            self.max_fwd_iat,
            self.mean_fwd_pkt_len,
            self.mean_bwd_pkt_len,
        ]
    }

    /// Feature by 1-based index (1 = duration ... 7 = mean backward length).
    pub fn get(&self, index: usize) -> f64 {
        self.to_array()[index - 1]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Application class label, 1 (highest priority) through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel(u8);

impl ClassLabel {
    pub const COUNT: usize = 4;

    pub fn new(label: u8) -> Option<Self> {
        (1..=Self::COUNT as u8).contains(&label).then_some(ClassLabel(label))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// 0-based position, used for table lookups.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = ClassLabel> {
        (1..=Self::COUNT as u8).map(ClassLabel)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppClass {
    pub label: ClassLabel,
    /// Minimum bandwidth requirement, bits/second.
    pub min_bw: f64,
    /// Acceptable one-way delay in seconds; `None` is best effort.
    pub acceptable_delay: Option<f64>,
}

/// The active per-class requirement table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    classes: [AppClass; ClassLabel::COUNT],
}

impl Default for ClassTable {
    /// Scaled-down testbed requirements: 20/40/60 ms, best effort; 10/5/2/1 Mbps.
    fn default() -> Self {
        let mk = |l: u8, bw_mbps: f64, delay_ms: Option<f64>| AppClass {
            label: ClassLabel(l),
            min_bw: bw_mbps * 1e6,
            acceptable_delay: delay_ms.map(|d| d / 1e3),
        };
        ClassTable {
            classes: [
                mk(1, 10.0, Some(20.0)),
                mk(2, 5.0, Some(40.0)),
                mk(3, 2.0, Some(60.0)),
                mk(4, 1.0, None),
            ],
        }
    }
}

impl ClassTable {
    pub fn get(&self, label: ClassLabel) -> &AppClass {
        &self.classes[label.index()]
    }

    pub fn set(&mut self, class: AppClass) {
        self.classes[class.label.index()] = class;
    }

    pub fn iter(&self) -> impl Iterator<Item = &AppClass> {
        self.classes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> FlowKey {
        FlowKey::new(NodeId(1), NodeId(2), FlowId(7))
    }

    fn fwd(t: f64, size: u32) -> PacketRecord {
        PacketRecord {
            timestamp: t,
            src: NodeId(1),
            dst: NodeId(2),
            size,
            flow_id: FlowId(7),
            direction: Direction::Forward,
            transport: Transport::Udp,
        }
    }

    #[test]
    fn first_packet_has_no_interarrival() {
        let mut r = FlowRecord::new(key());
        r.update(&fwd(0.0, 100)).unwrap();
        assert_eq!(r.fwd_packet_count, 1);
        assert_eq!(r.fwd_byte_count, 100);
        assert_eq!(r.fwd_interarrival.count, 0);
    }

    #[test]
    fn second_packet_single_sample() {
        let mut r = FlowRecord::new(key());
        r.update(&fwd(0.0, 100)).unwrap();
        r.update(&fwd(0.5, 100)).unwrap();
        let s = r.fwd_interarrival;
        assert_eq!((s.min, s.mean, s.max), (0.5, 0.5, 0.5));
    }

    #[test]
    fn rejects_foreign_and_out_of_order_packets() {
        let mut r = FlowRecord::new(key());
        r.update(&fwd(1.0, 100)).unwrap();
        let mut other = fwd(2.0, 100);
        other.flow_id = FlowId(8);
        assert!(matches!(r.update(&other), Err(FlowError::KeyMismatch { .. })));
        assert!(matches!(
            r.update(&fwd(0.5, 100)),
            Err(FlowError::OutOfOrder { .. })
        ));
        assert!(matches!(
            r.update(&fwd(3.0, 0)),
            Err(FlowError::InvalidPacket(_))
        ));
    }

    #[test]
    fn backward_packets_counted_separately() {
        let mut r = FlowRecord::new(key());
        r.update(&fwd(0.0, 100)).unwrap();
        let mut back = fwd(0.1, 40);
        back.src = NodeId(2);
        back.dst = NodeId(1);
        back.direction = Direction::Backward;
        r.update(&back).unwrap();
        r.update(&fwd(1.0, 100)).unwrap();
        assert_eq!(r.bwd_packet_count, 1);
        assert_eq!(r.fwd_interarrival.count, 1);
        let fv = r.features().unwrap();
        assert_eq!(fv.mean_bwd_pkt_len, 40.0);
        assert_eq!(fv.mean_fwd_iat, 1.0);
    }

    #[test]
    fn two_packet_features() {
        let mut r = FlowRecord::new(key());
        r.update(&fwd(0.0, 100)).unwrap();
        r.update(&fwd(1.0, 100)).unwrap();
        let fv = r.features().unwrap();
        assert_eq!(fv.duration, 1.0);
        assert_eq!(fv.mean_fwd_iat, 1.0);
        assert_eq!(fv.std_fwd_iat, 0.0);
        assert_eq!(fv.mean_fwd_pkt_len, 100.0);
        assert_eq!(fv.mean_bwd_pkt_len, 0.0);
    }

    #[test]
    fn features_need_two_forward_packets() {
        let mut r = FlowRecord::new(key());
        assert_eq!(r.features(), Err(FlowError::InsufficientData(0)));
        r.update(&fwd(0.0, 100)).unwrap();
        assert_eq!(r.features(), Err(FlowError::InsufficientData(1)));
    }

    #[test]
    fn cbr_interarrival_matches_rate() {
        // 1250 B at 1 Mbps -> 10 ms spacing
        let spacing = 1250.0 * 8.0 / 1e6;
        let mut r = FlowRecord::new(key());
        for i in 0..20 {
            r.update(&fwd(i as f64 * spacing, 1250)).unwrap();
        }
        let fv = r.features().unwrap();
        assert!((fv.mean_fwd_iat - 0.01).abs() < 1e-12);
    }

    #[test]
    fn class_table_defaults() {
        let t = ClassTable::default();
        let c1 = t.get(ClassLabel::new(1).unwrap());
        assert_eq!(c1.min_bw, 10e6);
        assert_eq!(c1.acceptable_delay, Some(0.02));
        assert_eq!(t.get(ClassLabel::new(4).unwrap()).acceptable_delay, None);
        assert!(ClassLabel::new(0).is_none());
        assert!(ClassLabel::new(5).is_none());
    }
}
