//! Per-link latency, available bandwidth and the derived cost map.
//!
//! Link cost combines measured latency (in milliseconds) with the inverse of
//! the normalized available bandwidth:
//!
//! ```text
//! NAB_i = AB_i / max_j AB_j
//! LC_i  = lambda_a * latency_ms_i + lambda_b / NAB_i
//! CP_p  = sum of LC_i over the edges of p
//! ```
//!
//! Only trunk (switch-to-switch) edges take part in normalization and path
//! selection; host access links are never part of a switch-level path.

use thiserror::Error;

use crate::topology::{EdgeId, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("inconsistent probe: total {total}s, switch round trips {s1}s and {s2}s")]
    InconsistentMeasurement { total: f64, s1: f64, s2: f64 },
    #[error("no link has available bandwidth")]
    DegenerateNetwork,
    #[error("edge {0:?} is not in the cost map")]
    MissingEdge(EdgeId),
    #[error("admission refused on {edge:?}: requested {requested} bps, available {available} bps")]
    AdmissionRefused {
        edge: EdgeId,
        requested: f64,
        available: f64,
    },
    #[error("release of {requested} bps exceeds {reserved} bps reserved on {edge:?}")]
    OverRelease {
        edge: EdgeId,
        requested: f64,
        reserved: f64,
    },
    #[error("invalid amount {0}")]
    InvalidAmount(f64),
}

/// One-way latency from an entire-trip time and the two switch round trips.
pub fn latency_from_probes(t_total: f64, t_s1: f64, t_s2: f64) -> Result<f64, LinkError> {
    let bad = || LinkError::InconsistentMeasurement {
        total: t_total,
        s1: t_s1,
        s2: t_s2,
    };
    if !(t_total > 0.0 && t_s1 > 0.0 && t_s2 > 0.0) {
        return Err(bad());
    }
    let latency = t_total - t_s1 / 2.0 - t_s2 / 2.0;
    if latency > 0.0 && latency.is_finite() {
        Ok(latency)
    } else {
        Err(bad())
    }
}

/// Normalizes available bandwidths by their maximum.
pub fn normalized_ab(available: &[f64]) -> Result<Vec<f64>, LinkError> {
    let max = available.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 || !max.is_finite() {
        return Err(LinkError::DegenerateNetwork);
    }
    Ok(available.iter().map(|ab| (ab / max).max(0.0)).collect())
}

/// Cost of a single link; `f64::INFINITY` marks an unusable link (no
/// available bandwidth), which pathfinding skips.
pub fn link_cost(latency_s: f64, nab: f64, lambda_a: f64, lambda_b: f64) -> f64 {
    if nab <= 0.0 {
        return f64::INFINITY;
    }
    lambda_a * (latency_s * 1e3) + lambda_b * (1.0 / nab)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    costs: Vec<f64>,
    pub lambda_a: f64,
    pub lambda_b: f64,
    stale: bool,
}

impl CostMap {
    /// A map with explicit per-edge costs, indexed by edge id.
    pub fn from_costs(costs: Vec<f64>) -> Self {
        CostMap {
            costs,
            lambda_a: 1.0,
            lambda_b: 1.0,
            stale: false,
        }
    }

    pub fn cost(&self, edge: EdgeId) -> Result<f64, LinkError> {
        self.costs
            .get(edge.index())
            .copied()
            .ok_or(LinkError::MissingEdge(edge))
    }

    pub fn usable(&self, edge: EdgeId) -> bool {
        self.costs
            .get(edge.index())
            .is_some_and(|c| c.is_finite())
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    /// Sum of per-edge costs along a path, accumulated in path order.
    pub fn path_cost(&self, edges: &[EdgeId]) -> Result<f64, LinkError> {
        edges.iter().try_fold(0.0, |acc, e| Ok(acc + self.cost(*e)?))
    }
}

/// Read-only view of one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub edge: EdgeId,
    pub capacity: f64,
    pub base_latency: f64,
    pub latency: f64,
    pub available_bw: f64,
    pub reserved_bw: f64,
}

/// Controller-side link database. Single writer (the controller); readers get
/// plain snapshots through `link` or `clone`.
#[derive(Debug, Clone)]
pub struct LinkState {
    topology: Topology,
    latency: Vec<f64>,
    reserved: Vec<f64>,
    cost: CostMap,
}

impl LinkState {
    pub fn new(topology: Topology, lambda_a: f64, lambda_b: f64) -> Self {
        let latency: Vec<f64> = topology.edges().map(|(_, e)| e.base_latency).collect();
        let n = latency.len();
        let mut state = LinkState {
            topology,
            latency,
            reserved: vec![0.0; n],
            cost: CostMap {
                costs: vec![f64::INFINITY; n],
                lambda_a,
                lambda_b,
                stale: true,
            },
        };
        state.refresh_costs();
        state
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn cost_map(&self) -> &CostMap {
        &self.cost
    }

    /// Replaces the cost map wholesale.
    pub fn set_cost_map(&mut self, map: CostMap) {
        self.cost = map;
    }

    pub fn link(&self, edge: EdgeId) -> Link {
        let e = self.topology.edge(edge);
        let reserved = self.reserved[edge.index()];
        Link {
            edge,
            capacity: e.capacity,
            base_latency: e.base_latency,
            latency: self.latency[edge.index()],
            available_bw: (e.capacity - reserved).max(0.0),
            reserved_bw: reserved,
        }
    }

    pub fn available_bw(&self, edge: EdgeId) -> f64 {
        (self.topology.edge(edge).capacity - self.reserved[edge.index()]).max(0.0)
    }

    pub fn reserved_bw(&self, edge: EdgeId) -> f64 {
        self.reserved[edge.index()]
    }

    pub fn latency(&self, edge: EdgeId) -> f64 {
        self.latency[edge.index()]
    }

    /// Stores a new latency sample for a directed edge. The cost map picks it
    /// up at the next refresh.
    pub fn set_latency(&mut self, edge: EdgeId, latency: f64) {
        self.latency[edge.index()] = latency;
        self.cost.stale = true;
    }

    pub fn reserve_bw(&mut self, edge: EdgeId, amount: f64) -> Result<(), LinkError> {
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(LinkError::InvalidAmount(amount));
        }
        let available = self.available_bw(edge);
        if amount > available {
            return Err(LinkError::AdmissionRefused {
                edge,
                requested: amount,
                available,
            });
        }
        self.reserved[edge.index()] += amount;
        self.cost.stale = true;
        Ok(())
    }

    pub fn release_bw(&mut self, edge: EdgeId, amount: f64) -> Result<(), LinkError> {
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(LinkError::InvalidAmount(amount));
        }
        let reserved = self.reserved[edge.index()];
        // Sums of reservations pick up rounding; forgive excess at that scale.
        let slack = 1e-9 * self.topology.edge(edge).capacity;
        if amount > reserved + slack {
            return Err(LinkError::OverRelease {
                edge,
                requested: amount,
                reserved,
            });
        }
        self.reserved[edge.index()] = (reserved - amount).max(0.0);
        self.cost.stale = true;
        Ok(())
    }

    /// Reserves `amount` on every edge or on none of them.
    pub fn reserve_path(&mut self, edges: &[EdgeId], amount: f64) -> Result<(), LinkError> {
        for (i, e) in edges.iter().enumerate() {
            if let Err(err) = self.reserve_bw(*e, amount) {
                for done in &edges[..i] {
                    self.release_bw(*done, amount)
                        .expect("rollback of a reservation just made");
                }
                return Err(err);
            }
        }
        Ok(())
    }

    pub fn release_path(&mut self, edges: &[EdgeId], amount: f64) -> Result<(), LinkError> {
        for e in edges {
            self.release_bw(*e, amount)?;
        }
        Ok(())
    }

    /// Recomputes normalized bandwidth and link cost for every trunk edge.
    pub fn refresh_costs(&mut self) {
        let trunks: Vec<EdgeId> = self
            .topology
            .edges()
            .map(|(id, _)| id)
            .filter(|id| self.topology.is_trunk(*id))
            .collect();
        let available: Vec<f64> = trunks.iter().map(|e| self.available_bw(*e)).collect();
        let nab = normalized_ab(&available).unwrap_or_else(|_| vec![0.0; trunks.len()]);
        for c in self.cost.costs.iter_mut() {
            *c = f64::INFINITY;
        }
        for (edge, nab) in trunks.iter().zip(nab) {
            self.cost.costs[edge.index()] = link_cost(
                self.latency[edge.index()],
                nab,
                self.cost.lambda_a,
                self.cost.lambda_b,
            );
        }
        self.cost.stale = false;
    }

    pub fn refresh_if_stale(&mut self) {
        if self.cost.stale {
            self.refresh_costs();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;

    fn two_links() -> (LinkState, EdgeId, EdgeId) {
        let mut t = Topology::new();
        let a = t.add_switch("a").unwrap();
        let b = t.add_switch("b").unwrap();
        let c = t.add_switch("c").unwrap();
        let ab = t.add_link(a, b, 32e6, 0.005).unwrap();
        let bc = t.add_link(b, c, 32e6, 0.002).unwrap();
        (LinkState::new(t, 1.0, 1.0), ab, bc)
    }

    #[test]
    fn probe_latency() {
        let l = latency_from_probes(0.010, 0.004, 0.002).unwrap();
        assert!((l - 0.007).abs() < 1e-15);
        assert!(latency_from_probes(0.010, 0.010, 0.010).is_err());
        assert!(latency_from_probes(0.0, 0.001, 0.001).is_err());
    }

    #[test]
    fn nab_examples() {
        assert_eq!(normalized_ab(&[32e6, 16e6]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(normalized_ab(&[7.0]).unwrap(), vec![1.0]);
        assert_eq!(
            normalized_ab(&[32.0, 32.0, 8.0]).unwrap(),
            vec![1.0, 1.0, 0.25]
        );
        assert_eq!(normalized_ab(&[0.0, 0.0]), Err(LinkError::DegenerateNetwork));
        assert_eq!(normalized_ab(&[]), Err(LinkError::DegenerateNetwork));
    }

    #[test]
    fn cost_examples() {
        assert_eq!(link_cost(0.005, 1.0, 1.0, 1.0), 6.0);
        assert_eq!(link_cost(0.005, 0.5, 1.0, 1.0), 7.0);
        assert!(link_cost(0.005, 0.0, 1.0, 1.0).is_infinite());
        let map = CostMap::from_costs(vec![6.0, 7.0, 6.0]);
        assert_eq!(map.path_cost(&[EdgeId(0), EdgeId(1)]).unwrap(), 13.0);
        assert_eq!(map.path_cost(&[]).unwrap(), 0.0);
        assert_eq!(
            map.path_cost(&[EdgeId(0), EdgeId(1), EdgeId(2)]).unwrap(),
            19.0
        );
        assert_eq!(
            map.path_cost(&[EdgeId(9)]),
            Err(LinkError::MissingEdge(EdgeId(9)))
        );
    }

    #[test]
    fn reservation_examples() {
        let (mut s, ab, _) = two_links();
        s.reserve_bw(ab, 10e6).unwrap();
        assert_eq!(s.available_bw(ab), 22e6);
        s.release_bw(ab, 10e6).unwrap();
        assert_eq!(s.available_bw(ab), 32e6);
        assert!(matches!(
            s.reserve_bw(ab, 40e6),
            Err(LinkError::AdmissionRefused { .. })
        ));
        assert!(matches!(
            s.release_bw(ab, 1.0),
            Err(LinkError::OverRelease { .. })
        ));
    }

    #[test]
    fn reservations_go_stale_until_refresh() {
        let (mut s, ab, bc) = two_links();
        assert_eq!(s.cost_map().cost(ab).unwrap(), 6.0);
        assert_eq!(s.cost_map().cost(bc).unwrap(), 3.0);
        s.reserve_bw(ab, 16e6).unwrap();
        assert!(s.cost_map().is_stale());
        assert_eq!(s.cost_map().cost(ab).unwrap(), 6.0);
        s.refresh_costs();
        assert_eq!(s.cost_map().cost(ab).unwrap(), 7.0);
    }

    #[test]
    fn path_reservation_is_all_or_nothing() {
        let (mut s, ab, bc) = two_links();
        s.reserve_bw(bc, 30e6).unwrap();
        assert!(s.reserve_path(&[ab, bc], 5e6).is_err());
        assert_eq!(s.reserved_bw(ab), 0.0);
        assert_eq!(s.reserved_bw(bc), 30e6);
    }

    #[test]
    fn access_links_are_not_costed() {
        let mut t = Topology::new();
        let a = t.add_switch("a").unwrap();
        let b = t.add_switch("b").unwrap();
        let h = t.add_host("h", a).unwrap();
        let acc = t.add_link(h, a, 1e9, 1e-4).unwrap();
        let ab = t.add_link(a, b, 32e6, 0.001).unwrap();
        let s = LinkState::new(t, 1.0, 1.0);
        assert!(!s.cost_map().usable(acc));
        assert_eq!(s.cost_map().cost(ab).unwrap(), 2.0);
        assert_eq!(s.topology().attachment(h).unwrap(), NodeId(0));
    }
}
