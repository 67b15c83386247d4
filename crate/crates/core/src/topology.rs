//! Switch/host graph and its text file format.
//!
//! ```text
//! # comment
//! switch s1
//! switch s2
//! host h1 s1
//! link h1 s1 1000000000 0.0001
//! link s1 s2 32000000 0.002
//! ```
//!
//! Every `link` is full duplex and expands into two directed edges that share
//! capacity and base latency values but carry independent traffic.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::error::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u32);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown node id {0:?}")]
    UnknownNodeId(NodeId),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("link between hosts `{0}` and `{1}`")]
    HostToHost(String, String),
    #[error("host `{host}` is attached to `{attached}` but linked to `{other}`")]
    WrongAttachment {
        host: String,
        attached: String,
        other: String,
    },
    #[error("host `{0}` has no access link")]
    MissingAccessLink(String),
    #[error("host `{0}` has more than one access link")]
    MultipleAccessLinks(String),
    #[error("link capacity must be positive and finite")]
    BadCapacity,
    #[error("link latency must be positive and finite")]
    BadLatency,
    #[error("`{0}` is not a switch")]
    NotASwitch(String),
    #[error("`{0}` is not a host")]
    NotAHost(String),
    #[error("edge {0:?} does not exist")]
    MissingEdge(EdgeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Switch,
    Host { attached: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// One direction of a full-duplex link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    /// bits/second
    pub capacity: f64,
    /// seconds
    pub base_latency: f64,
    pub reverse: EdgeId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<EdgeId>>,
    by_name: HashMap<String, NodeId>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_node(&mut self, name: &str, kind: NodeKind) -> Result<NodeId, TopologyError> {
        if self.by_name.contains_key(name) {
            return Err(TopologyError::DuplicateNode(name.to_string()));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
        });
        self.out_edges.push(Vec::new());
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_switch(&mut self, name: &str) -> Result<NodeId, TopologyError> {
        self.add_node(name, NodeKind::Switch)
    }

    pub fn add_host(&mut self, name: &str, switch: NodeId) -> Result<NodeId, TopologyError> {
        let sw = self.node(switch)?;
        if sw.kind != NodeKind::Switch {
            return Err(TopologyError::NotASwitch(sw.name.clone()));
        }
        self.add_node(name, NodeKind::Host { attached: switch })
    }

    /// Adds a full-duplex link; returns the `a -> b` edge.
    pub fn add_link(
        &mut self,
        a: NodeId,
        b: NodeId,
        capacity: f64,
        latency: f64,
    ) -> Result<EdgeId, TopologyError> {
        let na = self.node(a)?.clone();
        let nb = self.node(b)?.clone();
        if a == b {
            return Err(TopologyError::SelfLoop(na.name));
        }
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(TopologyError::BadCapacity);
        }
        if !(latency.is_finite() && latency > 0.0) {
            return Err(TopologyError::BadLatency);
        }
        match (na.kind, nb.kind) {
            (NodeKind::Host { .. }, NodeKind::Host { .. }) => {
                return Err(TopologyError::HostToHost(na.name, nb.name))
            }
            (NodeKind::Host { attached }, _) if attached != b => {
                return Err(TopologyError::WrongAttachment {
                    host: na.name,
                    attached: self.nodes[attached.index()].name.clone(),
                    other: nb.name,
                })
            }
            (_, NodeKind::Host { attached }) if attached != a => {
                return Err(TopologyError::WrongAttachment {
                    host: nb.name,
                    attached: self.nodes[attached.index()].name.clone(),
                    other: na.name,
                })
            }
            _ => {}
        }
        for (host, kind) in [(a, na.kind), (b, nb.kind)] {
            if matches!(kind, NodeKind::Host { .. }) && !self.out_edges[host.index()].is_empty() {
                return Err(TopologyError::MultipleAccessLinks(
                    self.nodes[host.index()].name.clone(),
                ));
            }
        }
        let fwd = EdgeId(self.edges.len() as u32);
        let rev = EdgeId(fwd.0 + 1);
        self.edges.push(Edge {
            from: a,
            to: b,
            capacity,
            base_latency: latency,
            reverse: rev,
        });
        self.edges.push(Edge {
            from: b,
            to: a,
            capacity,
            base_latency: latency,
            reverse: fwd,
        });
        self.out_edges[a.index()].push(fwd);
        self.out_edges[b.index()].push(rev);
        Ok(fwd)
    }

    /// Checks the properties the file format cannot enforce line by line.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Host { .. } = node.kind {
                if self.out_edges[i].is_empty() {
                    return Err(TopologyError::MissingAccessLink(node.name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TopologyError> {
        self.nodes
            .get(id.index())
            .ok_or(TopologyError::UnknownNodeId(id))
    }

    pub fn node_by_name(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| TopologyError::UnknownNode(name.to_string()))
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn is_switch(&self, id: NodeId) -> bool {
        matches!(
            self.nodes.get(id.index()).map(|n| n.kind),
            Some(NodeKind::Switch)
        )
    }

    pub fn is_host(&self, id: NodeId) -> bool {
        matches!(
            self.nodes.get(id.index()).map(|n| n.kind),
            Some(NodeKind::Host { .. })
        )
    }

    /// The switch a host hangs off; a switch maps to itself.
    pub fn attachment(&self, id: NodeId) -> Result<NodeId, TopologyError> {
        match self.node(id)?.kind {
            NodeKind::Switch => Ok(id),
            NodeKind::Host { attached } => Ok(attached),
        }
    }

    /// The host's single access edge (host -> switch).
    pub fn access_edge(&self, host: NodeId) -> Result<EdgeId, TopologyError> {
        let node = self.node(host)?;
        if !matches!(node.kind, NodeKind::Host { .. }) {
            return Err(TopologyError::NotAHost(node.name.clone()));
        }
        self.out_edges[host.index()]
            .first()
            .copied()
            .ok_or_else(|| TopologyError::MissingAccessLink(node.name.clone()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|(_, n)| n.kind == NodeKind::Switch).map(|(id, _)| id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Host { .. }))
            .map(|(id, _)| id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.index()]
    }

    pub fn try_edge(&self, id: EdgeId) -> Result<&Edge, TopologyError> {
        self.edges.get(id.index()).ok_or(TopologyError::MissingEdge(id))
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| (EdgeId(i as u32), e))
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.index()]
    }

    /// Both endpoints are switches.
    pub fn is_trunk(&self, id: EdgeId) -> bool {
        let e = self.edge(id);
        self.is_switch(e.from) && self.is_switch(e.to)
    }

    /// Parses the topology text format and validates the result.
    pub fn parse(text: &str) -> Result<Topology, ParseError> {
        let mut topo = Topology::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| ParseError::new(line_no, msg);
            let lookup = |t: &Topology, name: &str| {
                t.node_by_name(name).map_err(|e| err(e.to_string()))
            };
            match fields.as_slice() {
                ["switch", name] => {
                    topo.add_switch(name).map_err(|e| err(e.to_string()))?;
                }
                ["host", name, switch] => {
                    let sw = lookup(&topo, switch)?;
                    topo.add_host(name, sw).map_err(|e| err(e.to_string()))?;
                }
                ["link", a, b, cap, lat] => {
                    let a = lookup(&topo, a)?;
                    let b = lookup(&topo, b)?;
                    let cap: f64 = cap
                        .parse()
                        .map_err(|_| err(format!("invalid capacity `{cap}`")))?;
                    let lat: f64 = lat
                        .parse()
                        .map_err(|_| err(format!("invalid latency `{lat}`")))?;
                    topo.add_link(a, b, cap, lat)
                        .map_err(|e| err(e.to_string()))?;
                }
                [kw, ..] => {
                    return Err(err(format!(
                        "unrecognized directive `{kw}` with {} field(s)",
                        fields.len()
                    )))
                }
                [] => unreachable!(),
            }
        }
        let last = text.lines().count().max(1);
        topo.validate()
            .map_err(|e| ParseError::new(last, e.to_string()))?;
        Ok(topo)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (_, n) in self.nodes() {
            if n.kind == NodeKind::Switch {
                let _ = writeln!(out, "switch {}", n.name);
            }
        }
        for (_, n) in self.nodes() {
            if let NodeKind::Host { attached } = n.kind {
                let _ = writeln!(out, "host {} {}", n.name, self.name(attached));
            }
        }
        for (_, e) in self.edges().step_by(2) {
            let _ = writeln!(
                out,
                "link {} {} {} {}",
                self.name(e.from),
                self.name(e.to),
                e.capacity,
                e.base_latency
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# two switches, one host each
switch s1
switch s2
host h1 s1
host h2 s2
link h1 s1 1e9 0.0001
link h2 s2 1000000000 0.0001
link s1 s2 32000000 0.005 # trunk
";

    #[test]
    fn parses_small_topology() {
        let t = Topology::parse(SMALL).unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.edge_count(), 6);
        let s1 = t.node_by_name("s1").unwrap();
        let h1 = t.node_by_name("h1").unwrap();
        assert_eq!(t.attachment(h1).unwrap(), s1);
        let acc = t.access_edge(h1).unwrap();
        assert_eq!(t.edge(acc).to, s1);
        let trunk = t.edges().find(|(id, _)| t.is_trunk(*id)).unwrap().1;
        assert_eq!(trunk.capacity, 32e6);
        assert_eq!(trunk.base_latency, 0.005);
        assert_eq!(t.edge(trunk.reverse).from, trunk.to);
    }

    #[test]
    fn text_round_trip() {
        let t = Topology::parse(SMALL).unwrap();
        let again = Topology::parse(&t.to_text()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases = [
            ("switch a\nswitch a\n", 2),
            ("switch a\nlink a a 1 1\n", 2),
            ("switch a\nhost h a\n", 2),
            ("switch a\nswitch b\nhost h a\nlink h b 1 1\n", 4),
            ("switch a\nswitch b\nlink a b -5 0.1\n", 3),
            ("switch a\nswitch b\nlink a b 5 0\n", 3),
            ("switch a\nlink a zz 1 1\n", 2),
            ("router a\n", 1),
            ("switch a\nswitch b\nlink a b fast 0.1\n", 3),
        ];
        for (text, line) in cases {
            let err = Topology::parse(text).unwrap_err();
            assert_eq!(err.line, line, "{text:?}: {err}");
        }
    }

    #[test]
    fn host_has_one_access_link() {
        let mut t = Topology::new();
        let a = t.add_switch("a").unwrap();
        let h = t.add_host("h", a).unwrap();
        t.add_link(h, a, 1e9, 1e-4).unwrap();
        assert_eq!(
            t.add_link(a, h, 1e9, 1e-4),
            Err(TopologyError::MultipleAccessLinks("h".into()))
        );
    }
}
