//! Master-side registry of live nodes: registration, capability queries
//! and stale-node sweeping. The registry is the single source of truth
//! for which nodes exist; it does not survive a master restart (nodes
//! simply re-register).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{NodeDescriptor, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPolicy {
    pub heartbeat_interval_ms: u64,
    pub missed_heartbeats_max: u32,
}

impl Default for SweepPolicy {
    fn default() -> Self {
        // 2 s heartbeats, 3 missed => lost.
        Self {
            heartbeat_interval_ms: 2_000,
            missed_heartbeats_max: 3,
        }
    }
}

impl SweepPolicy {
    pub fn stale_after_ms(&self) -> u64 {
        self.heartbeat_interval_ms * self.missed_heartbeats_max as u64
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MembershipError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("address {0} already registered by {1}")]
    DuplicateAddress(String, NodeId),
    #[error("invalid node descriptor: {0}")]
    InvalidDescriptor(String),
}

#[derive(Debug, Clone)]
struct Entry {
    descriptor: NodeDescriptor,
    last_heartbeat: u64,
}

/// Predicates are conjunctive; absent fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub os_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cores: Option<u32>,
}

impl NodeFilter {
    pub fn service(tag: impl Into<String>) -> Self {
        Self {
            service_tag: Some(tag.into()),
            ..Default::default()
        }
    }

    pub fn matches(&self, d: &NodeDescriptor) -> bool {
        if let Some(tag) = &self.service_tag {
            if !d.hosts(tag) {
                return false;
            }
        }
        if let Some(os) = &self.os_tag {
            if &d.os_tag != os {
                return false;
            }
        }
        if let Some(min) = self.min_cores {
            if d.cores < min {
                return false;
            }
        }
        true
    }
}

#[derive(Debug)]
pub struct Registry {
    entries: BTreeMap<NodeId, Entry>,
    policy: SweepPolicy,
}

impl Registry {
    pub fn new(policy: SweepPolicy) -> Self {
        Self {
            entries: BTreeMap::new(),
            policy,
        }
    }

    pub fn policy(&self) -> SweepPolicy {
        self.policy
    }

    /// Adds a node. Rejects ids or addresses that are already live; a node
    /// that was swept may rejoin under the same id.
    pub fn register(&mut self, descriptor: NodeDescriptor, now: u64) -> Result<(), MembershipError> {
        descriptor
            .validate()
            .map_err(MembershipError::InvalidDescriptor)?;
        if self.entries.contains_key(&descriptor.node_id) {
            return Err(MembershipError::DuplicateNode(descriptor.node_id));
        }
        if let Some((id, _)) = self
            .entries
            .iter()
            .find(|(_, e)| e.descriptor.address == descriptor.address)
        {
            return Err(MembershipError::DuplicateAddress(
                descriptor.address.clone(),
                id.clone(),
            ));
        }
        self.entries.insert(
            descriptor.node_id.clone(),
            Entry {
                descriptor,
                last_heartbeat: now,
            },
        );
        Ok(())
    }

    /// Refreshes liveness; returns false for unknown nodes.
    pub fn heartbeat(&mut self, node_id: &NodeId, now: u64) -> bool {
        match self.entries.get_mut(node_id) {
            Some(e) => {
                e.last_heartbeat = now;
                true
            }
            None => false,
        }
    }

    /// Live entries satisfying every provided predicate, node_id ascending.
    pub fn query(&self, filter: &NodeFilter) -> Vec<&NodeDescriptor> {
        self.entries
            .values()
            .map(|e| &e.descriptor)
            .filter(|d| filter.matches(d))
            .collect()
    }

    /// Removes nodes silent for longer than the sweep threshold and
    /// reports them; the scheduler turns these into node-loss events.
    pub fn sweep(&mut self, now: u64) -> Vec<NodeId> {
        let stale = self.policy.stale_after_ms();
        let dead: Vec<NodeId> = self
            .entries
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.last_heartbeat) > stale)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &dead {
            self.entries.remove(id);
        }
        dead
    }

    pub fn remove(&mut self, node_id: &NodeId) -> Option<NodeDescriptor> {
        self.entries.remove(node_id).map(|e| e.descriptor)
    }

    pub fn get(&self, node_id: &NodeId) -> Option<&NodeDescriptor> {
        self.entries.get(node_id).map(|e| &e.descriptor)
    }

    pub fn last_heartbeat(&self, node_id: &NodeId) -> Option<u64> {
        self.entries.get(node_id).map(|e| e.last_heartbeat)
    }

    pub fn contains(&self, node_id: &NodeId) -> bool {
        self.entries.contains_key(node_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.entries.values().map(|e| &e.descriptor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{services, NodeOrigin};

    pub(crate) fn node(id: &str, cores: u32, tags: &[&str]) -> NodeDescriptor {
        NodeDescriptor {
            node_id: NodeId::new(id),
            address: format!("127.0.0.1:9{id}", id = id.trim_start_matches(|c: char| !c.is_ascii_digit())),
            cores,
            memory_mb: 1740,
            os_tag: "linux".into(),
            services: tags.iter().map(|s| s.to_string()).collect(),
            origin: NodeOrigin::Physical,
            instance_type: None,
            lease_start: None,
        }
    }

    fn reg() -> Registry {
        Registry::new(SweepPolicy::default())
    }

    #[test]
    fn register_three_distinct_nodes() {
        let mut r = reg();
        for (i, id) in ["n1", "n2", "n3"].iter().enumerate() {
            let mut d = node(id, 1, &[services::TASK_EXEC]);
            d.address = format!("127.0.0.1:900{i}");
            r.register(d, 0).unwrap();
        }
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn re_register_live_node_is_rejected() {
        let mut r = reg();
        r.register(node("n1", 1, &[services::TASK_EXEC]), 0).unwrap();
        let err = r.register(node("n1", 1, &[services::TASK_EXEC]), 1).unwrap_err();
        assert_eq!(err, MembershipError::DuplicateNode(NodeId::new("n1")));
    }

    #[test]
    fn rejoin_after_sweep_is_accepted() {
        let mut r = reg();
        r.register(node("n1", 1, &[services::TASK_EXEC]), 0).unwrap();
        let stale = r.policy().stale_after_ms();
        assert_eq!(r.sweep(stale + 1), vec![NodeId::new("n1")]);
        assert!(r.register(node("n1", 1, &[services::TASK_EXEC]), stale + 2).is_ok());
    }

    #[test]
    fn query_filters_by_service_tag() {
        let mut r = reg();
        let mut a = node("n1", 1, &[services::TASK_EXEC]);
        a.address = "h:1".into();
        let mut b = node("n2", 1, &[services::TASK_EXEC]);
        b.address = "h:2".into();
        let mut c = node("n3", 1, &[services::STORAGE]);
        c.address = "h:3".into();
        for d in [a, b, c] {
            r.register(d, 0).unwrap();
        }
        let execs = r.query(&NodeFilter::service(services::TASK_EXEC));
        assert_eq!(
            execs.iter().map(|d| d.node_id.as_str()).collect::<Vec<_>>(),
            vec!["n1", "n2"]
        );
        assert_eq!(r.query(&NodeFilter::default()).len(), 3);
    }

    #[test]
    fn min_cores_filter_selects_only_bigger_nodes() {
        // One single-core and one dual-core node, per the shipped catalog.
        let mut r = reg();
        let mut small = node("n1", 1, &[services::TASK_EXEC]);
        small.address = "h:1".into();
        let mut medium = node("n2", 2, &[services::TASK_EXEC]);
        medium.address = "h:2".into();
        r.register(small, 0).unwrap();
        r.register(medium, 0).unwrap();
        let filter = NodeFilter {
            min_cores: Some(2),
            ..Default::default()
        };
        let hits = r.query(&filter);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].node_id.as_str(), "n2");
    }

    #[test]
    fn sweep_removes_only_silent_nodes() {
        let mut r = reg();
        let mut a = node("n1", 1, &[services::TASK_EXEC]);
        a.address = "h:1".into();
        let mut b = node("n2", 1, &[services::TASK_EXEC]);
        b.address = "h:2".into();
        r.register(a, 0).unwrap();
        r.register(b, 0).unwrap();
        let stale = r.policy().stale_after_ms();
        // n2 keeps heartbeating, n1 goes silent.
        r.heartbeat(&NodeId::new("n2"), stale);
        assert_eq!(r.sweep(stale + 1), vec![NodeId::new("n1")]);
        assert_eq!(r.sweep(stale + 1), Vec::<NodeId>::new());
        assert!(r.contains(&NodeId::new("n2")));
    }

    #[test]
    fn fresh_heartbeats_mean_empty_sweep() {
        let mut r = reg();
        r.register(node("n1", 1, &[services::TASK_EXEC]), 0).unwrap();
        assert!(r.sweep(r.policy().stale_after_ms()).is_empty());
    }
}
