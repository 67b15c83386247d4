//! Path-selection rules, kept free of controller state so they can be checked
//! in isolation.

use crate::flow::{AppClass, ClassLabel, Transport};
use crate::pathfinding::Path;

/// Index of the provisional path among `n` cost-ordered candidates: the
/// median, element `ceil(n/2)` counting from one.
pub fn provisional_index(n: usize) -> Option<usize> {
    (n > 0).then(|| n.div_ceil(2) - 1)
}

/// Paths that can carry `class`: enough available bandwidth and, unless the
/// class is best effort, low enough latency. Cost order is preserved.
pub fn feasible_paths<'a>(paths: &'a [Path], class: &AppClass) -> Vec<&'a Path> {
    paths
        .iter()
        .filter(|p| p.bottleneck_ab >= class.min_bw)
        .filter(|p| {
            class
                .acceptable_delay
                .is_none_or(|bound| p.total_latency <= bound)
        })
        .collect()
}

/// Position in the cost-ordered feasible list assigned to `class`:
/// `floor((class - 1) * n_feasible / n_classes)`, clamped to the last path.
pub fn assign_index(class: ClassLabel, n_feasible: usize, n_classes: usize) -> Option<usize> {
    if n_feasible == 0 || n_classes == 0 {
        return None;
    }
    let idx = class.index() * n_feasible / n_classes;
    Some(idx.min(n_feasible - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochDecision {
    Keep,
    Reroute,
}

/// Throughput audit: only TCP flows are held to the class bandwidth floor.
pub fn epoch_decision(transport: Transport, min_bw: f64, measured_bps: f64) -> EpochDecision {
    match transport {
        Transport::Udp => EpochDecision::Keep,
        Transport::Tcp if measured_bps >= min_bw => EpochDecision::Keep,
        Transport::Tcp => EpochDecision::Reroute,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ClassTable;
    use crate::topology::NodeId;

    fn path(ab_mbps: f64, latency_ms: f64) -> Path {
        Path {
            nodes: vec![NodeId(0)],
            edges: vec![],
            total_cost: 0.0,
            bottleneck_ab: ab_mbps * 1e6,
            total_latency: latency_ms / 1e3,
        }
    }

    fn cls(l: u8) -> ClassLabel {
        ClassLabel::new(l).unwrap()
    }

    #[test]
    fn provisional_is_median() {
        assert_eq!(provisional_index(0), None);
        assert_eq!(provisional_index(1), Some(0));
        assert_eq!(provisional_index(8), Some(3));
        assert_eq!(provisional_index(5), Some(2));
    }

    #[test]
    fn feasibility_checks_bandwidth_and_delay() {
        let table = ClassTable::default();
        let paths = [path(22.0, 15.0), path(5.0, 10.0)];
        let c1 = feasible_paths(&paths, table.get(cls(1)));
        assert_eq!(c1.len(), 1);
        assert_eq!(c1[0].bottleneck_ab, 22e6);
        assert_eq!(feasible_paths(&paths, table.get(cls(4))).len(), 2);
        let saturated = [path(0.5, 1.0), path(0.0, 1.0)];
        assert!(feasible_paths(&saturated, table.get(cls(4))).is_empty());
    }

    #[test]
    fn class_interval_indexing() {
        assert_eq!(assign_index(cls(1), 8, 4), Some(0));
        assert_eq!(assign_index(cls(2), 8, 4), Some(2));
        assert_eq!(assign_index(cls(4), 8, 4), Some(6));
        for l in 1..=4 {
            assert_eq!(assign_index(cls(l), 1, 4), Some(0));
        }
        assert_eq!(assign_index(cls(4), 3, 4), Some(2));
        assert_eq!(assign_index(cls(1), 0, 4), None);
    }

    #[test]
    fn epoch_examples() {
        assert_eq!(epoch_decision(Transport::Tcp, 5e6, 6e6), EpochDecision::Keep);
        assert_eq!(epoch_decision(Transport::Tcp, 10e6, 8e6), EpochDecision::Reroute);
        assert_eq!(epoch_decision(Transport::Udp, 10e6, 0.0), EpochDecision::Keep);
    }
}
