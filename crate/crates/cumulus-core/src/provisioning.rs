//! Resource pools over a simulated hourly-billed IaaS provider: instance
//! catalog, boot latency, grow/shrink policy, and real-time cost tracking.
//!
//! The pool's shrink rule embodies the reuse strategy: paid time is never
//! abandoned, so an instance is only released when it is idle *and* close
//! to a whole paid hour.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;
use crate::types::NodeId;

pub const MS_PER_HOUR: u64 = 3_600_000;

/// A leasable machine shape. `compute_units` is opaque catalog metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceType {
    pub name: String,
    pub cores: u32,
    pub compute_units: f64,
    pub memory_mb: u64,
    pub rate_per_hour: Money,
    #[serde(default = "default_boot_latency_s")]
    pub boot_latency_s: u64,
}

fn default_boot_latency_s() -> u64 {
    90
}

impl InstanceType {
    pub fn validate(&self) -> Result<(), String> {
        if self.cores == 0 {
            return Err(format!("{}: cores must be >= 1", self.name));
        }
        if self.rate_per_hour <= Money::ZERO {
            return Err(format!("{}: rate must be positive", self.name));
        }
        Ok(())
    }
}

/// The shipped two-entry catalog: a single-core and a dual-core shape at
/// 0.10 and 0.20 per hour.
pub fn default_catalog() -> Catalog {
    Catalog::new(vec![
        InstanceType {
            name: "m1.small".into(),
            cores: 1,
            compute_units: 2.5,
            memory_mb: 1740,
            rate_per_hour: Money::parse("0.10").unwrap(),
            boot_latency_s: 90,
        },
        InstanceType {
            name: "c1.medium".into(),
            cores: 2,
            compute_units: 5.0,
            memory_mb: 1740,
            rate_per_hour: Money::parse("0.20").unwrap(),
            boot_latency_s: 90,
        },
    ])
    .expect("default catalog is valid")
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    types: BTreeMap<String, InstanceType>,
}

impl Catalog {
    pub fn new(types: Vec<InstanceType>) -> Result<Self, PoolError> {
        let mut map = BTreeMap::new();
        for t in types {
            t.validate().map_err(PoolError::BadCatalog)?;
            map.insert(t.name.clone(), t);
        }
        Ok(Self { types: map })
    }

    pub fn from_json(text: &str) -> Result<Self, PoolError> {
        let types: Vec<InstanceType> =
            serde_json::from_str(text).map_err(|e| PoolError::BadCatalog(e.to_string()))?;
        Self::new(types)
    }

    pub fn get(&self, name: &str) -> Option<&InstanceType> {
        self.types.get(name)
    }

    pub fn types(&self) -> impl Iterator<Item = &InstanceType> {
        self.types.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceState {
    Booting,
    Active,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionedInstance {
    pub instance_id: String,
    pub type_name: String,
    pub state: InstanceState,
    /// When boot began.
    pub boot_ms: u64,
    /// When the hosted container registered; billing starts here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_ms: Option<u64>,
    /// Present once Active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
}

impl ProvisionedInstance {
    /// Billable uptime: Active to termination (or `now`). Booting
    /// instances accrue nothing yet.
    pub fn uptime_ms(&self, now: u64) -> u64 {
        match self.active_ms {
            None => 0,
            Some(start) => {
                let end = self.terminated_ms.unwrap_or(now).max(start);
                end - start
            }
        }
    }
}

/// Charged per started hour with a minimum of one hour once active;
/// termination freezes the uptime.
pub fn accrued_cost(instance: &ProvisionedInstance, rate_per_hour: Money, now: u64) -> Money {
    if instance.active_ms.is_none() {
        return Money::ZERO;
    }
    let hours = billed_hours(instance.uptime_ms(now));
    rate_per_hour.times(hours)
}

/// `max(1, ceil(uptime / 1 h))`.
pub fn billed_hours(uptime_ms: u64) -> u64 {
    uptime_ms.div_ceil(MS_PER_HOUR).max(1)
}

/// Grow/shrink policy knobs. `grow_window_ms` is how long demand must be
/// sustained before growing; `hour_boundary_window_ms` is how close to a
/// whole paid hour an idle instance must be before release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPolicy {
    pub preferred_type: String,
    pub max_instances: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_cap: Option<Money>,
    pub grow_window_ms: u64,
    pub grow_step: u32,
    pub shrink_idle_ms: u64,
    pub hour_boundary_window_ms: u64,
}

impl PoolPolicy {
    pub fn basic(preferred_type: impl Into<String>, max_instances: u32) -> Self {
        Self {
            preferred_type: preferred_type.into(),
            max_instances,
            budget_cap: None,
            grow_window_ms: 10_000,
            grow_step: 20,
            shrink_idle_ms: 60_000,
            hour_boundary_window_ms: 300_000,
        }
    }
}

/// Demand snapshot the scheduler hands the pool each evaluation tick.
#[derive(Debug, Clone, Default)]
pub struct QueueStats {
    pub pending_units: usize,
    pub idle_cores: u32,
    /// Instances with no in-flight units, with the time they went idle.
    pub idle_instances: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolDecision {
    Grow { type_name: String, count: u32 },
    Shrink(Vec<String>),
    Hold,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    #[error("provider rejected the request: {0}")]
    ProviderRejected(String),
    #[error("unknown instance type {0:?}")]
    UnknownType(String),
    #[error("bad catalog: {0}")]
    BadCatalog(String),
}

/// One resource pool against one (simulated) provider.
#[derive(Debug)]
pub struct Pool {
    catalog: Catalog,
    policy: PoolPolicy,
    instances: BTreeMap<String, ProvisionedInstance>,
    next_id: u64,
    /// When the sustained-demand window started, if demand is up.
    grow_trigger_since: Option<u64>,
    /// Fault injection for tests: rejects the next N requests.
    reject_next: u32,
}

impl Pool {
    pub fn new(catalog: Catalog, policy: PoolPolicy) -> Self {
        Self {
            catalog,
            policy,
            instances: BTreeMap::new(),
            next_id: 1,
            grow_trigger_since: None,
            reject_next: 0,
        }
    }

    pub fn policy(&self) -> &PoolPolicy {
        &self.policy
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn instances(&self) -> impl Iterator<Item = &ProvisionedInstance> {
        self.instances.values()
    }

    pub fn instance(&self, id: &str) -> Option<&ProvisionedInstance> {
        self.instances.get(id)
    }

    pub fn live_count(&self) -> u32 {
        self.instances
            .values()
            .filter(|i| i.state != InstanceState::Terminated)
            .count() as u32
    }

    /// Simulated provider fault injection.
    pub fn inject_rejections(&mut self, n: u32) {
        self.reject_next = n;
    }

    /// Leases `n` instances of `type_name`, Booting immediately. Refuses
    /// requests that would exceed the instance cap or, projected one hour
    /// out, the budget cap.
    pub fn request_instances(
        &mut self,
        type_name: &str,
        n: u32,
        now: u64,
    ) -> Result<Vec<ProvisionedInstance>, PoolError> {
        let itype = self
            .catalog
            .get(type_name)
            .ok_or_else(|| PoolError::UnknownType(type_name.to_string()))?
            .clone();
        if self.reject_next > 0 {
            self.reject_next -= 1;
            return Err(PoolError::ProviderRejected("injected fault".into()));
        }
        if self.live_count() + n > self.policy.max_instances {
            return Err(PoolError::CapExceeded(format!(
                "{} live + {n} requested > max {}",
                self.live_count(),
                self.policy.max_instances
            )));
        }
        if let Some(cap) = self.policy.budget_cap {
            let projected = self.pool_cost(now) + itype.rate_per_hour.times(n as u64);
            if projected > cap {
                return Err(PoolError::CapExceeded(format!(
                    "projected cost {projected} > budget cap {cap}"
                )));
            }
        }
        let mut created = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let id = format!("i-{:04}", self.next_id);
            self.next_id += 1;
            let inst = ProvisionedInstance {
                instance_id: id.clone(),
                type_name: itype.name.clone(),
                state: InstanceState::Booting,
                boot_ms: now,
                active_ms: None,
                terminated_ms: None,
                node_id: None,
            };
            self.instances.insert(id, inst.clone());
            created.push(inst);
        }
        Ok(created)
    }

    /// The hosted container registered; billing starts.
    pub fn mark_active(&mut self, instance_id: &str, node_id: NodeId, now: u64) -> bool {
        match self.instances.get_mut(instance_id) {
            Some(i) if i.state == InstanceState::Booting => {
                i.state = InstanceState::Active;
                i.active_ms = Some(now);
                i.node_id = Some(node_id);
                true
            }
            _ => false,
        }
    }

    pub fn mark_terminated(&mut self, instance_id: &str, now: u64) -> bool {
        match self.instances.get_mut(instance_id) {
            Some(i) if i.state != InstanceState::Terminated => {
                i.state = InstanceState::Terminated;
                i.terminated_ms = Some(now);
                true
            }
            _ => false,
        }
    }

    pub fn terminate_all(&mut self, now: u64) {
        let ids: Vec<String> = self.instances.keys().cloned().collect();
        for id in ids {
            self.mark_terminated(&id, now);
        }
    }

    /// Boot latency of an instance's type, in ms.
    pub fn boot_latency_ms(&self, instance_id: &str) -> u64 {
        self.instances
            .get(instance_id)
            .and_then(|i| self.catalog.get(&i.type_name))
            .map(|t| t.boot_latency_s * 1000)
            .unwrap_or(0)
    }

    pub fn rate_of(&self, instance: &ProvisionedInstance) -> Money {
        self.catalog
            .get(&instance.type_name)
            .map(|t| t.rate_per_hour)
            .unwrap_or(Money::ZERO)
    }

    pub fn accrued(&self, instance_id: &str, now: u64) -> Money {
        match self.instances.get(instance_id) {
            Some(i) => accrued_cost(i, self.rate_of(i), now),
            None => Money::ZERO,
        }
    }

    /// Total cost over every instance ever created in the pool.
    pub fn pool_cost(&self, now: u64) -> Money {
        self.instances
            .values()
            .map(|i| accrued_cost(i, self.rate_of(i), now))
            .sum()
    }

    /// Billed hours per instance type at `now`.
    pub fn instance_hours(&self, now: u64) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> = BTreeMap::new();
        for i in self.instances.values() {
            if i.active_ms.is_some() {
                *out.entry(i.type_name.clone()).or_default() += billed_hours(i.uptime_ms(now));
            }
        }
        out
    }

    /// Grow when demand has been sustained past the window; shrink only
    /// instances idle long enough *and* within the boundary window of a
    /// whole paid hour. Busy instances are categorically untouchable.
    pub fn evaluate_policy(&mut self, stats: &QueueStats, now: u64) -> PoolDecision {
        let demand_up = stats.pending_units > stats.idle_cores as usize;
        if demand_up {
            let since = *self.grow_trigger_since.get_or_insert(now);
            if now.saturating_sub(since) >= self.policy.grow_window_ms {
                if let Some(count) = self.grow_amount(stats, now) {
                    self.grow_trigger_since = None;
                    return PoolDecision::Grow {
                        type_name: self.policy.preferred_type.clone(),
                        count,
                    };
                }
            }
            return PoolDecision::Hold;
        }
        self.grow_trigger_since = None;

        let mut releasable = Vec::new();
        for (id, idle_since) in &stats.idle_instances {
            let Some(inst) = self.instances.get(id) else {
                continue;
            };
            if inst.state != InstanceState::Active {
                continue;
            }
            if now.saturating_sub(*idle_since) < self.policy.shrink_idle_ms {
                continue;
            }
            let uptime = inst.uptime_ms(now);
            let to_boundary = (MS_PER_HOUR - uptime % MS_PER_HOUR) % MS_PER_HOUR;
            if to_boundary <= self.policy.hour_boundary_window_ms {
                releasable.push(id.clone());
            }
        }
        if releasable.is_empty() {
            PoolDecision::Hold
        } else {
            PoolDecision::Shrink(releasable)
        }
    }

    /// Instances needed to cover the core deficit, clamped by grow step,
    /// the instance cap and the budget cap. None when no growth fits.
    fn grow_amount(&self, stats: &QueueStats, now: u64) -> Option<u32> {
        let itype = self.catalog.get(&self.policy.preferred_type)?;
        let deficit = stats.pending_units.saturating_sub(stats.idle_cores as usize) as u64;
        let needed = deficit.div_ceil(itype.cores as u64) as u32;
        let mut n = needed
            .min(self.policy.grow_step)
            .min(self.policy.max_instances.saturating_sub(self.live_count()));
        if let Some(cap) = self.policy.budget_cap {
            let room = cap - self.pool_cost(now);
            let rate = itype.rate_per_hour.micros().max(1);
            let affordable = (room.micros().max(0) / rate) as u32;
            n = n.min(affordable);
        }
        (n > 0).then_some(n)
    }
}
