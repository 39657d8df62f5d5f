//! Master-side application intake, FIFO queueing, one-task-per-core
//! dispatch, completion handling and node-loss recovery.
//!
//! The scheduler is a pure state machine driven by the master's single
//! control loop (real or simulated): every input arrives as a call with an
//! explicit `now`, and identical call sequences produce identical
//! assignment traces.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::UsageRecord;
use crate::lifecycle::{transition, UnitEvent, DEFAULT_MAX_ATTEMPTS};
use crate::membership::{NodeFilter, Registry};
use crate::models::{expand_application, ModelError};
use crate::transport::messages::{AppStatusView, ExecOutcome};
use crate::types::{
    AppId, ApplicationDescriptor, ExecutionUnit, NodeId, UnitId, UnitKey, UnitState,
};
use crate::validate::{validate_application, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppState {
    Running,
    Finished,
    FinishedWithFailures,
}

impl AppState {
    pub fn is_terminal(self) -> bool {
        self != AppState::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AppState::Running => "running",
            AppState::Finished => "finished",
            AppState::FinishedWithFailures => "finished_with_failures",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppRecord {
    pub descriptor: ApplicationDescriptor,
    pub state: AppState,
    pub total_units: usize,
    pub completed: usize,
    pub failed: usize,
    pub submitted_ms: u64,
    pub finished_ms: Option<u64>,
    /// Arrival time of the latest staged-back output.
    pub last_output_ms: Option<u64>,
}

impl AppRecord {
    /// Makespan per the submission-to-last-output-arrival definition; for
    /// unfinished applications this is the elapsed time so far.
    pub fn makespan_ms(&self, now: u64) -> u64 {
        let end = match self.finished_ms {
            Some(f) => f.max(self.last_output_ms.unwrap_or(0)),
            None => now,
        };
        end.saturating_sub(self.submitted_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub unit: UnitKey,
    pub node: NodeId,
}

/// A terminal or rejection report for an in-flight unit.
#[derive(Debug, Clone)]
pub struct CompletionReport {
    pub key: UnitKey,
    pub node: NodeId,
    pub outcome: ExecOutcome,
}

#[derive(Debug, Default)]
pub struct CompletionEffects {
    /// Set when the report was a duplicate and ignored.
    pub duplicate: bool,
    pub usage_record: Option<UsageRecord>,
    /// Units whose prerequisites are now all satisfied.
    pub newly_ready: Vec<UnitKey>,
    pub app_finished: Option<(AppId, AppState)>,
    /// A rejected unit that went back to the queue head.
    pub requeued: Option<UnitKey>,
}

#[derive(Debug, Default)]
pub struct NodeLossEffects {
    pub requeued: Vec<UnitKey>,
    pub failed: Vec<UnitKey>,
    pub usage_records: Vec<UsageRecord>,
    pub apps_finished: Vec<(AppId, AppState)>,
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("validation failed: {}", summarize(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("duplicate app id {0}")]
    DuplicateAppId(AppId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("unknown or stale unit {0}")]
    UnknownUnit(UnitKey),
    #[error("unknown application {0}")]
    UnknownApplication(AppId),
    #[error("unit {key} cannot {event:?} from {state}")]
    BadLifecycle {
        key: UnitKey,
        event: UnitEvent,
        state: UnitState,
    },
}

#[derive(Debug)]
pub struct Scheduler {
    max_attempts: u32,
    apps: BTreeMap<AppId, AppRecord>,
    units: BTreeMap<UnitKey, ExecutionUnit>,
    pending: VecDeque<UnitKey>,
    /// Remaining prerequisites per gated unit.
    blocked: BTreeMap<UnitKey, BTreeSet<UnitId>>,
    in_flight: BTreeMap<UnitKey, NodeId>,
    free_cores: BTreeMap<NodeId, u32>,
    next_app_seq: u64,
}

impl Default for Scheduler {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_ATTEMPTS)
    }
}

impl Scheduler {
    pub fn new(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            apps: BTreeMap::new(),
            units: BTreeMap::new(),
            pending: VecDeque::new(),
            blocked: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            free_cores: BTreeMap::new(),
            next_app_seq: 1,
        }
    }

    /// Validates, expands and enqueues an application. Shared-file staging
    /// is the caller's concern (once per application per node).
    pub fn submit(
        &mut self,
        mut descriptor: ApplicationDescriptor,
        now: u64,
    ) -> Result<AppId, SubmitError> {
        let violations = validate_application(&descriptor);
        if !violations.is_empty() {
            return Err(SubmitError::ValidationFailed(violations));
        }
        let app_id = match &descriptor.app_id {
            Some(id) => id.clone(),
            None => {
                let id = AppId::new(format!("app-{:04}", self.next_app_seq));
                descriptor.app_id = Some(id.clone());
                id
            }
        };
        if self.apps.contains_key(&app_id) {
            return Err(SubmitError::DuplicateAppId(app_id));
        }
        self.next_app_seq += 1;
        descriptor.submitted_at = Some(now);

        let expansion = expand_application(&app_id, &descriptor)?;
        let total_units = expansion.units.len();
        for mut unit in expansion.units {
            unit.timestamps.submitted = Some(now);
            let key = unit.key();
            match expansion.deps.get(&unit.unit_id) {
                Some(deps) if !deps.is_empty() => {
                    self.blocked.insert(key.clone(), deps.clone());
                }
                _ => self.pending.push_back(key.clone()),
            }
            self.units.insert(key, unit);
        }
        self.apps.insert(
            app_id.clone(),
            AppRecord {
                descriptor,
                state: AppState::Running,
                total_units,
                completed: 0,
                failed: 0,
                submitted_ms: now,
                finished_ms: None,
                last_output_ms: None,
            },
        );
        Ok(app_id)
    }

    /// Greedily assigns queue-head units to capability-matched nodes with
    /// free cores, nodes in node_id order; each assignment consumes one
    /// core. Units with no eligible node stay queued.
    pub fn dispatch_cycle(&mut self, registry: &Registry, now: u64) -> Vec<Assignment> {
        // Adopt nodes the registry learned about since the last cycle.
        for node in registry.iter() {
            self.free_cores
                .entry(node.node_id.clone())
                .or_insert(node.cores);
        }

        let mut assignments = Vec::new();
        let mut still_pending = VecDeque::with_capacity(self.pending.len());
        while let Some(key) = self.pending.pop_front() {
            let unit = match self.units.get(&key) {
                Some(u) if u.state == UnitState::Pending => u,
                _ => continue,
            };
            let tag = unit.work.required_service();
            let chosen = registry
                .query(&NodeFilter::service(tag))
                .into_iter()
                .find(|d| self.free_cores.get(&d.node_id).copied().unwrap_or(0) > 0)
                .map(|d| d.node_id.clone());
            match chosen {
                Some(node_id) => {
                    let staged = transition(unit, UnitEvent::Stage, now, self.max_attempts)
                        .expect("pending units accept stage");
                    let mut staged = staged;
                    staged.assigned_node = Some(node_id.clone());
                    self.units.insert(key.clone(), staged);
                    *self.free_cores.get_mut(&node_id).unwrap() -= 1;
                    self.in_flight.insert(key.clone(), node_id.clone());
                    assignments.push(Assignment {
                        unit: key,
                        node: node_id,
                    });
                }
                None => still_pending.push_back(key),
            }
        }
        self.pending = still_pending;
        assignments
    }

    /// Staging finished and the dispatch message is on its way.
    pub fn mark_dispatched(&mut self, key: &UnitKey, now: u64) -> Result<(), SchedulerError> {
        self.apply_event(key, UnitEvent::Dispatch, now)
    }

    /// The node reported the unit started.
    pub fn mark_running(&mut self, key: &UnitKey, now: u64) -> Result<(), SchedulerError> {
        self.apply_event(key, UnitEvent::Start, now)
    }

    fn apply_event(&mut self, key: &UnitKey, event: UnitEvent, now: u64) -> Result<(), SchedulerError> {
        let unit = self
            .units
            .get(key)
            .ok_or_else(|| SchedulerError::UnknownUnit(key.clone()))?;
        let next = transition(unit, event, now, self.max_attempts).map_err(|_| {
            SchedulerError::BadLifecycle {
                key: key.clone(),
                event,
                state: unit.state,
            }
        })?;
        self.units.insert(key.clone(), next);
        Ok(())
    }

    /// Applies a completion (or rejection) report. Duplicate reports are
    /// ignored; reports from a node the unit is not in flight on are stale.
    pub fn handle_completion(
        &mut self,
        report: CompletionReport,
        now: u64,
    ) -> Result<CompletionEffects, SchedulerError> {
        let key = report.key.clone();
        let unit = self
            .units
            .get(&key)
            .ok_or_else(|| SchedulerError::UnknownUnit(key.clone()))?
            .clone();

        if unit.state.is_terminal() {
            return Ok(CompletionEffects {
                duplicate: true,
                ..Default::default()
            });
        }
        match self.in_flight.get(&key) {
            Some(node) if *node == report.node => {}
            _ => return Err(SchedulerError::UnknownUnit(key)),
        }

        let mut effects = CompletionEffects::default();
        self.release_core(&report.node);
        self.in_flight.remove(&key);

        match report.outcome {
            ExecOutcome::Completed { exit_code, outputs } => {
                let mut cur = unit;
                // A result can outrun the start notification.
                if cur.state == UnitState::Dispatched {
                    cur = transition(&cur, UnitEvent::Start, now, self.max_attempts)
                        .expect("dispatched accepts start");
                }
                let mut done = transition(&cur, UnitEvent::Complete, now, self.max_attempts)
                    .map_err(|_| SchedulerError::BadLifecycle {
                        key: key.clone(),
                        event: UnitEvent::Complete,
                        state: cur.state,
                    })?;
                done.result = Some(crate::types::UnitResult {
                    exit_code: Some(exit_code),
                    outputs,
                    error: None,
                });
                effects.usage_record = self.usage_record_for(&done);
                self.units.insert(key.clone(), done);
                self.bump_app(&key.app, true);
                effects.newly_ready = self.unblock_dependents(&key);
            }
            ExecOutcome::Failed { exit_code, error } => {
                let mut done = transition(&unit, UnitEvent::Fail, now, self.max_attempts)
                    .map_err(|_| SchedulerError::BadLifecycle {
                        key: key.clone(),
                        event: UnitEvent::Fail,
                        state: unit.state,
                    })?;
                done.result = Some(crate::types::UnitResult {
                    exit_code,
                    outputs: Vec::new(),
                    error: Some(error),
                });
                effects.usage_record = self.usage_record_for(&done);
                self.units.insert(key.clone(), done);
                self.bump_app(&key.app, false);
            }
            ExecOutcome::Rejected { reason: _ } => {
                // Same discipline as node loss: back to the queue head, or
                // Failed once attempts run out.
                let next = transition(&unit, UnitEvent::NodeLost, now, self.max_attempts)
                    .expect("in-flight unit accepts node_lost");
                if next.state == UnitState::Pending {
                    self.pending.push_front(key.clone());
                    effects.requeued = Some(key.clone());
                    self.units.insert(key.clone(), next);
                } else {
                    effects.usage_record = self.usage_record_for(&next);
                    self.units.insert(key.clone(), next);
                    self.bump_app(&key.app, false);
                }
            }
        }

        effects.app_finished = self.check_app_finished(&key.app, now);
        Ok(effects)
    }

    /// Every in-flight unit on the lost node goes back to the queue head
    /// with attempts bumped, or fails once attempts are exhausted.
    pub fn handle_node_loss(&mut self, node_id: &NodeId, now: u64) -> NodeLossEffects {
        self.free_cores.remove(node_id);
        let victims: Vec<UnitKey> = self
            .in_flight
            .iter()
            .filter(|(_, n)| *n == node_id)
            .map(|(k, _)| k.clone())
            .collect();

        let mut effects = NodeLossEffects::default();
        let mut apps_touched = BTreeSet::new();
        // push_front in reverse keeps the victims' relative order at the head.
        for key in victims.iter().rev() {
            self.in_flight.remove(key);
            let unit = self.units.get(key).expect("in-flight unit exists");
            let next = transition(unit, UnitEvent::NodeLost, now, self.max_attempts)
                .expect("in-flight unit accepts node_lost");
            if next.state == UnitState::Pending {
                self.pending.push_front(key.clone());
                effects.requeued.push(key.clone());
            } else {
                if let Some(rec) = self.usage_record_for(&next) {
                    effects.usage_records.push(rec);
                }
                effects.failed.push(key.clone());
                self.bump_app(&key.app, false);
                apps_touched.insert(key.app.clone());
            }
            self.units.insert(key.clone(), next);
        }
        effects.requeued.reverse();
        for app in apps_touched {
            if let Some(done) = self.check_app_finished(&app, now) {
                effects.apps_finished.push(done);
            }
        }
        effects
    }

    /// A clean departure: stop scheduling onto the node. Any units still
    /// in flight there are handled as a loss by the caller.
    pub fn node_departed(&mut self, node_id: &NodeId) {
        self.free_cores.remove(node_id);
    }

    /// Records the arrival of staged-back outputs; feeds the makespan.
    pub fn note_output_arrival(&mut self, app_id: &AppId, now: u64) {
        if let Some(app) = self.apps.get_mut(app_id) {
            app.last_output_ms = Some(app.last_output_ms.map_or(now, |t| t.max(now)));
        }
    }

    pub fn status(&self, app_id: &AppId, now: u64) -> Result<AppStatusView, SchedulerError> {
        let app = self
            .apps
            .get(app_id)
            .ok_or_else(|| SchedulerError::UnknownApplication(app_id.clone()))?;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for state in [
            UnitState::Pending,
            UnitState::Staged,
            UnitState::Dispatched,
            UnitState::Running,
            UnitState::Completed,
            UnitState::Failed,
        ] {
            counts.insert(state.to_string(), 0);
        }
        for unit in self.units_of(app_id) {
            *counts.get_mut(&unit.state.to_string()).unwrap() += 1;
        }
        Ok(AppStatusView {
            app_id: app_id.clone(),
            owner: app.descriptor.owner.clone(),
            model: app.descriptor.model.kind().to_string(),
            state: app.state.as_str().to_string(),
            counts,
            total_units: app.total_units,
            submitted_ms: app.submitted_ms,
            finished_ms: app.finished_ms,
            makespan_ms: app.makespan_ms(now),
        })
    }

    pub fn app(&self, app_id: &AppId) -> Option<&AppRecord> {
        self.apps.get(app_id)
    }

    pub fn apps(&self) -> impl Iterator<Item = (&AppId, &AppRecord)> {
        self.apps.iter()
    }

    pub fn unit(&self, key: &UnitKey) -> Option<&ExecutionUnit> {
        self.units.get(key)
    }

    pub fn units_of<'a>(&'a self, app_id: &'a AppId) -> impl Iterator<Item = &'a ExecutionUnit> {
        self.units
            .range(
                UnitKey {
                    app: app_id.clone(),
                    unit: UnitId::new(""),
                }..,
            )
            .take_while(move |(k, _)| &k.app == app_id)
            .map(|(_, u)| u)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn idle_cores(&self) -> u32 {
        self.free_cores.values().sum()
    }

    pub fn free_cores_of(&self, node_id: &NodeId) -> u32 {
        self.free_cores.get(node_id).copied().unwrap_or(0)
    }

    pub fn in_flight_on(&self, node_id: &NodeId) -> usize {
        self.in_flight.values().filter(|n| *n == node_id).count()
    }

    pub fn in_flight_len(&self) -> usize {
        self.in_flight.len()
    }

    pub fn blocked_len(&self) -> usize {
        self.blocked.len()
    }

    fn release_core(&mut self, node_id: &NodeId) {
        if let Some(c) = self.free_cores.get_mut(node_id) {
            *c += 1;
        }
    }

    fn usage_record_for(&self, unit: &ExecutionUnit) -> Option<UsageRecord> {
        let started = unit.timestamps.started?;
        let ended = unit.timestamps.ended?;
        let app = self.apps.get(&unit.app_id)?;
        Some(UsageRecord::from_times(
            app.descriptor.owner.clone(),
            unit.app_id.clone(),
            unit.unit_id.clone(),
            unit.assigned_node.clone().unwrap_or_else(|| NodeId::new("unknown")),
            started,
            ended,
        ))
    }

    fn bump_app(&mut self, app_id: &AppId, completed: bool) {
        if let Some(app) = self.apps.get_mut(app_id) {
            if completed {
                app.completed += 1;
            } else {
                app.failed += 1;
            }
        }
    }

    /// Moves blocked units whose last prerequisite just completed into the
    /// pending queue, in unit order.
    fn unblock_dependents(&mut self, completed: &UnitKey) -> Vec<UnitKey> {
        let mut ready = Vec::new();
        let keys: Vec<UnitKey> = self
            .blocked
            .keys()
            .filter(|k| k.app == completed.app)
            .cloned()
            .collect();
        for key in keys {
            let deps = self.blocked.get_mut(&key).unwrap();
            deps.remove(&completed.unit);
            if deps.is_empty() {
                self.blocked.remove(&key);
                self.pending.push_back(key.clone());
                ready.push(key);
            }
        }
        ready
    }

    /// An application finishes when nothing of it is pending or in flight
    /// and every still-gated unit is transitively unsatisfiable (some
    /// prerequisite failed). Gated units left behind stay Pending; the
    /// terminal state never leaves.
    fn check_app_finished(&mut self, app_id: &AppId, now: u64) -> Option<(AppId, AppState)> {
        let app = self.apps.get(app_id)?;
        if app.state.is_terminal() {
            return None;
        }
        if self.pending.iter().any(|k| &k.app == app_id) {
            return None;
        }
        if self.in_flight.keys().any(|k| &k.app == app_id) {
            return None;
        }

        let blocked_keys: Vec<UnitKey> = self
            .blocked
            .keys()
            .filter(|k| &k.app == app_id)
            .cloned()
            .collect();
        let mut stranded = false;
        for key in &blocked_keys {
            let deps = &self.blocked[key];
            // With no pending or in-flight work left, any remaining
            // prerequisite is either failed or itself gated: unsatisfiable
            // either way.
            let unsat = deps.iter().any(|dep| {
                let dep_key = UnitKey {
                    app: app_id.clone(),
                    unit: dep.clone(),
                };
                match self.units.get(&dep_key) {
                    Some(u) => u.state == UnitState::Failed || self.blocked.contains_key(&dep_key),
                    None => true,
                }
            });
            if !unsat {
                return None;
            }
            stranded = true;
        }
        for key in blocked_keys {
            self.blocked.remove(&key);
        }

        let app = self.apps.get_mut(app_id)?;
        app.state = if app.failed == 0 && !stranded {
            AppState::Finished
        } else {
            AppState::FinishedWithFailures
        };
        app.finished_ms = Some(now);
        Some((app_id.clone(), app.state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membership::SweepPolicy;
    use crate::types::{services, CommandSpec, ModelPayload, NodeDescriptor, NodeOrigin, TaskPayload};

    fn node(id: &str, cores: u32) -> NodeDescriptor {
        NodeDescriptor {
            node_id: NodeId::new(id),
            address: format!("addr-{id}"),
            cores,
            memory_mb: 1740,
            os_tag: "linux".into(),
            services: [services::TASK_EXEC.to_string()].into_iter().collect(),
            origin: NodeOrigin::Physical,
            instance_type: None,
            lease_start: None,
        }
    }

    fn registry(nodes: &[(&str, u32)]) -> Registry {
        let mut r = Registry::new(SweepPolicy::default());
        for (id, cores) in nodes {
            r.register(node(id, *cores), 0).unwrap();
        }
        r
    }

    fn bag(n: usize) -> ApplicationDescriptor {
        ApplicationDescriptor::new(
            "alice",
            ModelPayload::Task(TaskPayload {
                tasks: (0..n).map(|i| CommandSpec::shell("echo", &[&i.to_string()])).collect(),
            }),
        )
    }

    fn complete(s: &mut Scheduler, a: &Assignment, now: u64) -> CompletionEffects {
        s.mark_dispatched(&a.unit, now).unwrap();
        s.mark_running(&a.unit, now).unwrap();
        s.handle_completion(
            CompletionReport {
                key: a.unit.clone(),
                node: a.node.clone(),
                outcome: ExecOutcome::Completed {
                    exit_code: 0,
                    outputs: vec![],
                },
            },
            now + 61_000,
        )
        .unwrap()
    }

    #[test]
    fn submit_enqueues_units_in_order() {
        let mut s = Scheduler::default();
        let app = s.submit(bag(8), 0).unwrap();
        assert_eq!(s.pending_len(), 8);
        let ids: Vec<&str> = s.units_of(&app).map(|u| u.unit_id.as_str()).collect();
        assert_eq!(ids[0], "t0000");
        assert_eq!(ids[7], "t0007");
    }

    #[test]
    fn submit_rejects_invalid_applications() {
        let mut s = Scheduler::default();
        let mut d = bag(1);
        d.owner = "".into();
        match s.submit(d, 0) {
            Err(SubmitError::ValidationFailed(v)) => assert!(!v.is_empty()),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn two_core_node_receives_two_tasks_in_one_cycle() {
        let mut s = Scheduler::default();
        s.submit(bag(4), 0).unwrap();
        let r = registry(&[("n1", 2)]);
        let assignments = s.dispatch_cycle(&r, 1);
        assert_eq!(assignments.len(), 2);
        assert!(assignments.iter().all(|a| a.node == NodeId::new("n1")));
        assert_eq!(s.pending_len(), 2);
        assert_eq!(s.free_cores_of(&NodeId::new("n1")), 0);
    }

    #[test]
    fn empty_queue_dispatches_nothing() {
        let mut s = Scheduler::default();
        let r = registry(&[("n1", 2)]);
        assert!(s.dispatch_cycle(&r, 0).is_empty());
    }

    // Hand-simulated greedy rule: 5 pending over {1-core, 2-core} nodes
    // makes 3 assignments and leaves 2 queued.
    #[test]
    fn greedy_fill_across_mixed_nodes() {
        let mut s = Scheduler::default();
        s.submit(bag(5), 0).unwrap();
        let r = registry(&[("n1", 1), ("n2", 2)]);
        let assignments = s.dispatch_cycle(&r, 1);
        assert_eq!(assignments.len(), 3);
        assert_eq!(s.pending_len(), 2);
    }

    #[test]
    fn completion_frees_core_and_finishes_app() {
        let mut s = Scheduler::default();
        let app = s.submit(bag(1), 0).unwrap();
        let r = registry(&[("n1", 1)]);
        let a = s.dispatch_cycle(&r, 1).remove(0);
        let fx = complete(&mut s, &a, 2);
        assert!(!fx.duplicate);
        assert_eq!(fx.usage_record.as_ref().unwrap().wall_minutes, 2);
        assert_eq!(fx.app_finished, Some((app.clone(), AppState::Finished)));
        assert_eq!(s.free_cores_of(&NodeId::new("n1")), 1);
        assert_eq!(s.app(&app).unwrap().state, AppState::Finished);
    }

    #[test]
    fn duplicate_completion_is_ignored() {
        let mut s = Scheduler::default();
        s.submit(bag(1), 0).unwrap();
        let r = registry(&[("n1", 1)]);
        let a = s.dispatch_cycle(&r, 1).remove(0);
        complete(&mut s, &a, 2);
        let again = s
            .handle_completion(
                CompletionReport {
                    key: a.unit.clone(),
                    node: a.node.clone(),
                    outcome: ExecOutcome::Completed {
                        exit_code: 0,
                        outputs: vec![],
                    },
                },
                99,
            )
            .unwrap();
        assert!(again.duplicate);
        assert!(again.usage_record.is_none());
        // The core was not freed twice.
        assert_eq!(s.free_cores_of(&NodeId::new("n1")), 1);
    }

    #[test]
    fn failed_unit_still_finishes_app_with_failures() {
        let mut s = Scheduler::default();
        let app = s.submit(bag(2), 0).unwrap();
        let r = registry(&[("n1", 2)]);
        let assignments = s.dispatch_cycle(&r, 1);
        for a in &assignments {
            s.mark_dispatched(&a.unit, 1).unwrap();
            s.mark_running(&a.unit, 1).unwrap();
        }
        let ok = s
            .handle_completion(
                CompletionReport {
                    key: assignments[0].unit.clone(),
                    node: assignments[0].node.clone(),
                    outcome: ExecOutcome::Completed {
                        exit_code: 0,
                        outputs: vec![],
                    },
                },
                5,
            )
            .unwrap();
        assert!(ok.app_finished.is_none());
        let bad = s
            .handle_completion(
                CompletionReport {
                    key: assignments[1].unit.clone(),
                    node: assignments[1].node.clone(),
                    outcome: ExecOutcome::Failed {
                        exit_code: Some(1),
                        error: "exit 1".into(),
                    },
                },
                6,
            )
            .unwrap();
        // Failed units are metered too.
        assert!(bad.usage_record.is_some());
        assert_eq!(bad.app_finished, Some((app, AppState::FinishedWithFailures)));
    }

    #[test]
    fn node_loss_requeues_at_head_with_bumped_attempts() {
        let mut s = Scheduler::default();
        s.submit(bag(3), 0).unwrap();
        let r = registry(&[("n1", 2)]);
        let assignments = s.dispatch_cycle(&r, 1);
        assert_eq!(assignments.len(), 2);
        for a in &assignments {
            s.mark_dispatched(&a.unit, 1).unwrap();
            s.mark_running(&a.unit, 1).unwrap();
        }
        let fx = s.handle_node_loss(&NodeId::new("n1"), 10);
        assert_eq!(fx.requeued.len(), 2);
        assert!(fx.failed.is_empty());
        // Head of queue, original order preserved, attempts bumped.
        assert_eq!(s.pending_len(), 3);
        let head = fx.requeued[0].clone();
        assert_eq!(s.unit(&head).unwrap().attempts, 2);
        assert_eq!(s.unit(&head).unwrap().state, UnitState::Pending);
    }

    #[test]
    fn idle_node_loss_is_a_no_op() {
        let mut s = Scheduler::default();
        s.submit(bag(1), 0).unwrap();
        let fx = s.handle_node_loss(&NodeId::new("ghost"), 1);
        assert!(fx.requeued.is_empty() && fx.failed.is_empty());
    }

    #[test]
    fn unit_fails_after_attempts_exhaust() {
        let mut s = Scheduler::default();
        let app = s.submit(bag(1), 0).unwrap();
        for round in 0..3u64 {
            let r = registry(&[("n1", 1)]);
            let assignments = s.dispatch_cycle(&r, round * 10 + 1);
            assert_eq!(assignments.len(), 1, "round {round}");
            let a = &assignments[0];
            s.mark_dispatched(&a.unit, round * 10 + 1).unwrap();
            s.mark_running(&a.unit, round * 10 + 2).unwrap();
            let fx = s.handle_node_loss(&NodeId::new("n1"), round * 10 + 3);
            if round < 2 {
                assert_eq!(fx.requeued.len(), 1);
            } else {
                assert_eq!(fx.failed.len(), 1);
                assert_eq!(fx.apps_finished, vec![(app.clone(), AppState::FinishedWithFailures)]);
            }
        }
        assert_eq!(s.app(&app).unwrap().failed, 1);
    }

    #[test]
    fn status_reports_counts_and_makespan() {
        let mut s = Scheduler::default();
        let app = s.submit(bag(1), 0).unwrap();
        let r = registry(&[("n1", 1)]);
        let a = s.dispatch_cycle(&r, 0).remove(0);
        let snapshot = s.status(&app, 30_000).unwrap();
        assert_eq!(snapshot.counts["staged"], 1);
        assert_eq!(snapshot.makespan_ms, 30_000);

        s.mark_dispatched(&a.unit, 0).unwrap();
        s.mark_running(&a.unit, 0).unwrap();
        s.handle_completion(
            CompletionReport {
                key: a.unit.clone(),
                node: a.node.clone(),
                outcome: ExecOutcome::Completed {
                    exit_code: 0,
                    outputs: vec![],
                },
            },
            6_420_000,
        )
        .unwrap();
        s.note_output_arrival(&app, 6_420_000);
        // 6420 s end-to-end: 107 simulated minutes.
        let snapshot = s.status(&app, 7_000_000).unwrap();
        assert_eq!(snapshot.makespan_ms, 6_420_000);
        assert_eq!(snapshot.makespan_ms / 60_000, 107);
        assert_eq!(snapshot.state, "finished");
    }

    #[test]
    fn unknown_app_status_errors() {
        let s = Scheduler::default();
        assert!(matches!(
            s.status(&AppId::new("nope"), 0),
            Err(SchedulerError::UnknownApplication(_))
        ));
    }

    #[test]
    fn stale_report_is_rejected() {
        let mut s = Scheduler::default();
        s.submit(bag(1), 0).unwrap();
        let r = registry(&[("n1", 1)]);
        let a = s.dispatch_cycle(&r, 1).remove(0);
        let err = s
            .handle_completion(
                CompletionReport {
                    key: a.unit.clone(),
                    node: NodeId::new("intruder"),
                    outcome: ExecOutcome::Completed {
                        exit_code: 0,
                        outputs: vec![],
                    },
                },
                2,
            )
            .unwrap_err();
        assert!(matches!(err, SchedulerError::UnknownUnit(_)));
    }
}
