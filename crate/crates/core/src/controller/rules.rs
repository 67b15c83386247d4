//! Per-switch flow tables as maintained by the controller.

use std::collections::BTreeMap;

use crate::flow::FlowKey;
use crate::time::SimTime;
use crate::topology::{EdgeId, NodeId};

pub const PRIORITY_PROVISIONAL: u16 = 10;
pub const PRIORITY_ASSIGNED: u16 = 20;
pub const PRIORITY_PINNED: u16 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRule {
    pub switch: NodeId,
    pub key: FlowKey,
    pub next_hop: EdgeId,
    pub priority: u16,
    /// `SimTime::MAX` for rules that never expire.
    pub hard_timeout: SimTime,
    /// The time the rule takes effect on the switch.
    pub install_ts: SimTime,
}

impl FlowRule {
    pub fn expires_at(&self) -> SimTime {
        self.install_ts + self.hard_timeout
    }

    /// Active on `[install_ts, install_ts + hard_timeout)`.
    pub fn is_active(&self, now: SimTime) -> bool {
        self.install_ts <= now && now < self.expires_at()
    }

    fn outranks(&self, other: &FlowRule) -> bool {
        (self.priority, self.install_ts) > (other.priority, other.install_ts)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleTable {
    rules: BTreeMap<(NodeId, FlowKey), Vec<FlowRule>>,
    len: usize,
}

impl RuleTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a rule. If a rule with the same switch, match, action and priority
    /// is still live when the new one takes effect, its timeout is extended to
    /// the new expiry instead, so a refresh never leaves a gap.
    pub fn install(&mut self, rule: FlowRule) {
        let slot = self.rules.entry((rule.switch, rule.key)).or_default();
        if let Some(existing) = slot
            .iter_mut()
            .find(|r| r.next_hop == rule.next_hop && r.priority == rule.priority)
        {
            if existing.expires_at() > rule.install_ts && existing.install_ts <= rule.install_ts {
                let expiry = existing.expires_at().max(rule.expires_at());
                existing.hard_timeout = expiry - existing.install_ts;
            } else {
                *existing = rule;
            }
        } else {
            slot.push(rule);
            self.len += 1;
        }
    }

    /// The winning active rule: highest priority, then latest install.
    pub fn lookup(&self, switch: NodeId, key: &FlowKey, now: SimTime) -> Option<&FlowRule> {
        let slot = self.rules.get(&(switch, *key))?;
        let mut best: Option<&FlowRule> = None;
        for r in slot.iter().filter(|r| r.is_active(now)) {
            if best.is_none_or(|b| r.outranks(b)) {
                best = Some(r);
            }
        }
        best
    }

    /// Removes every rule whose hard timeout has passed; returns them in
    /// table order.
    pub fn expire(&mut self, now: SimTime) -> Vec<FlowRule> {
        let mut removed = Vec::new();
        self.rules.retain(|_, slot| {
            slot.retain(|r| {
                if r.expires_at() <= now {
                    removed.push(*r);
                    false
                } else {
                    true
                }
            });
            !slot.is_empty()
        });
        self.len -= removed.len();
        removed
    }

    /// Whether any rule for `key` is still installed (possibly not yet active).
    pub fn has_rules_for(&self, key: &FlowKey, now: SimTime) -> bool {
        self.rules
            .iter()
            .any(|((_, k), slot)| k == key && slot.iter().any(|r| r.expires_at() > now))
    }

    pub fn rules_for<'a>(&'a self, key: &'a FlowKey) -> impl Iterator<Item = &'a FlowRule> + 'a {
        self.rules
            .iter()
            .filter(move |((_, k), _)| k == key)
            .flat_map(|(_, slot)| slot.iter())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowId;

    fn key() -> FlowKey {
        FlowKey::new(NodeId(0), NodeId(1), FlowId(1))
    }

    fn rule(hop: u32, priority: u16, install: u64, timeout: u64) -> FlowRule {
        FlowRule {
            switch: NodeId(5),
            key: key(),
            next_hop: EdgeId(hop),
            priority,
            hard_timeout: SimTime::from_millis(timeout * 1000),
            install_ts: SimTime::from_millis(install * 1000),
        }
    }

    fn secs(s: u64) -> SimTime {
        SimTime::from_millis(s * 1000)
    }

    #[test]
    fn expiry_is_inclusive() {
        let mut t = RuleTable::new();
        t.install(rule(1, 10, 0, 100));
        assert!(t.lookup(NodeId(5), &key(), secs(99)).is_some());
        assert!(t.lookup(NodeId(5), &key(), secs(100)).is_none());
        assert_eq!(t.expire(secs(100)).len(), 1);
        assert!(t.is_empty());
    }

    #[test]
    fn refresh_extends_lifetime() {
        let mut t = RuleTable::new();
        t.install(rule(1, 10, 0, 100));
        t.install(rule(1, 10, 90, 100));
        assert_eq!(t.len(), 1);
        assert!(t.expire(secs(100)).is_empty());
        assert!(t.lookup(NodeId(5), &key(), secs(150)).is_some());
        // Still the original rule, so no gap opened before the refresh time.
        assert!(t.lookup(NodeId(5), &key(), secs(50)).is_some());
        assert_eq!(t.rules_for(&key()).next().unwrap().expires_at(), secs(190));
        assert!(t.lookup(NodeId(5), &key(), secs(190)).is_none());
    }

    #[test]
    fn priority_then_recency_wins() {
        let mut t = RuleTable::new();
        t.install(rule(1, PRIORITY_PROVISIONAL, 0, 100));
        t.install(rule(2, PRIORITY_ASSIGNED, 5, 100));
        assert_eq!(t.lookup(NodeId(5), &key(), secs(6)).unwrap().next_hop, EdgeId(2));
        // Not yet in effect.
        assert_eq!(t.lookup(NodeId(5), &key(), secs(4)).unwrap().next_hop, EdgeId(1));
        t.install(rule(3, PRIORITY_ASSIGNED, 8, 100));
        assert_eq!(t.lookup(NodeId(5), &key(), secs(9)).unwrap().next_hop, EdgeId(3));
    }

    #[test]
    fn permanent_rules_never_expire() {
        let mut t = RuleTable::new();
        t.install(FlowRule {
            hard_timeout: SimTime::MAX,
            ..rule(1, PRIORITY_PINNED, 3, 0)
        });
        assert!(t.expire(SimTime(u64::MAX - 1)).is_empty());
        assert!(t.has_rules_for(&key(), secs(1_000_000)));
    }
}
