//! Synthetic application profiles and the labeled-trace generator.
//!
//! Each generated flow is a short packet sequence, run through the same
//! [`FlowRecord`] the controller uses, so training features match what the
//! controller sees during its observation window: forward packets only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::classifier::LabeledExample;
use crate::flow::{ClassLabel, Direction, FlowId, FlowKey, FlowRecord, PacketRecord, Transport};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAppProfile {
    pub name: &'static str,
    pub class: ClassLabel,
    /// Mean packet size of a flow is drawn from N(size_mean, size_flow_std);
    /// packets then scatter around it with `size_pkt_std`. Bytes.
    pub size_mean: f64,
    pub size_flow_std: f64,
    pub size_pkt_std: f64,
    /// Per-flow mean interarrival is uniform in this range; gaps are
    /// exponential around it. Seconds.
    pub iat_range: (f64, f64),
}

fn class(l: u8) -> ClassLabel {
    ClassLabel::new(l).expect("valid label")
}

/// Ten applications grouped into the four classes: Skype; YouTube and Google
/// Docs; Gmail and Facebook; Dropbox, Copy, FileZilla and Torrent.
pub fn default_profiles() -> Vec<SyntheticAppProfile> {
    let p = |name, l, size_mean, size_flow_std, iat_range| SyntheticAppProfile {
        name,
        class: class(l),
        size_mean,
        size_flow_std,
        size_pkt_std: 80.0,
        iat_range,
    };
    vec![
        p("skype", 1, 1000.0, 40.0, (0.004, 0.030)),
        p("youtube", 2, 1320.0, 30.0, (0.002, 0.020)),
        p("google-docs", 2, 1270.0, 35.0, (0.005, 0.060)),
        p("gmail", 3, 660.0, 50.0, (0.005, 0.080)),
        p("facebook", 3, 760.0, 50.0, (0.003, 0.050)),
        p("dropbox", 4, 1480.0, 12.0, (0.001, 0.020)),
        p("copy", 4, 1470.0, 15.0, (0.001, 0.020)),
        p("filezilla", 4, 1490.0, 8.0, (0.001, 0.010)),
        p("torrent", 4, 1450.0, 25.0, (0.002, 0.040)),
    ]
}

/// Packet sizes are clamped to this range, bytes.
pub const MIN_PACKET: f64 = 64.0;
pub const MAX_PACKET: f64 = 1500.0;

fn sample_flow(
    profile: &SyntheticAppProfile,
    n_packets: usize,
    rng: &mut ChaCha8Rng,
) -> FlowRecord {
    let key = FlowKey::new(NodeId(0), NodeId(1), FlowId(0));
    let mut record = FlowRecord::new(key);
    let flow_mean = Normal::new(profile.size_mean, profile.size_flow_std)
        .expect("valid std")
        .sample(rng)
        .clamp(MIN_PACKET, MAX_PACKET);
    let size_dist = Normal::new(flow_mean, profile.size_pkt_std).expect("valid std");
    let iat_mean = rng.random_range(profile.iat_range.0..=profile.iat_range.1);
    let gap = Exp::new(1.0 / iat_mean).expect("positive rate");
    let mut t = 0.0;
    for i in 0..n_packets {
        if i > 0 {
            t += gap.sample(rng);
        }
        let size = size_dist.sample(rng).clamp(MIN_PACKET, MAX_PACKET).round() as u32;
        let pkt = PacketRecord {
            timestamp: t,
            src: key.src,
            dst: key.dst,
            size,
            flow_id: key.flow_id,
            direction: Direction::Forward,
            transport: Transport::Udp,
        };
        record.update(&pkt).expect("generated packets are ordered and non-empty");
    }
    record
}

/// `n_flows` labeled flows of `n_packets` packets each. Classes are
/// balanced (assigned round robin); within a class the application is
/// chosen at random.
pub fn generate_traces(
    profiles: &[SyntheticAppProfile],
    n_flows: usize,
    n_packets: usize,
    seed: u64,
) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<&SyntheticAppProfile>> = vec![Vec::new(); ClassLabel::COUNT];
    for p in profiles {
        by_class[p.class.index()].push(p);
    }
    let present: Vec<usize> = (0..ClassLabel::COUNT)
        .filter(|c| !by_class[*c].is_empty())
        .collect();
    if present.is_empty() {
        return Vec::new();
    }
    let n_packets = n_packets.max(2);
    (0..n_flows)
        .map(|i| {
            let apps = &by_class[present[i % present.len()]];
            let profile = apps[rng.random_range(0..apps.len())];
            let record = sample_flow(profile, n_packets, &mut rng);
            LabeledExample {
                features: record.features().expect("at least two packets"),
                label: profile.class,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let profiles = default_profiles();
        let a = generate_traces(&profiles, 500, 50, 1);
        assert_eq!(a.len(), 500);
        for l in ClassLabel::all() {
            assert_eq!(a.iter().filter(|e| e.label == l).count(), 125);
        }
        assert_eq!(a, generate_traces(&profiles, 500, 50, 1));
        assert_ne!(a, generate_traces(&profiles, 500, 50, 2));
        assert!(a.iter().all(|e| e.features.is_valid()));
    }

    #[test]
    fn class_means_are_separated() {
        let ex = generate_traces(&default_profiles(), 400, 50, 3);
        let mean = |l: u8| {
            let v: Vec<f64> = ex
                .iter()
                .filter(|e| e.label.get() == l)
                .map(|e| e.features.mean_fwd_pkt_len)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let mut m: Vec<f64> = (1..=4).map(mean).collect();
        m.sort_by(f64::total_cmp);
        for w in m.windows(2) {
            assert!(w[1] - w[0] > 100.0, "{m:?}");
        }
    }
}
