//! Domain types shared by every other module.
//!
//! Applications are the unit of deployment; execution units are the atomic
//! schedulable work items they expand into. Nodes advertise themselves with
//! a [`NodeDescriptor`] whether they run on physical hardware or on a
//! provisioned instance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Platform-wide unique application identifier.
    AppId
);
string_id!(
    /// Unit identifier, unique within its application.
    UnitId
);
string_id!(
    /// Container/node identifier, unique across the cloud.
    NodeId
);

/// Fully qualified unit key: `(app, unit)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub app: AppId,
    pub unit: UnitId,
}

impl UnitKey {
    pub fn new(app: impl Into<AppId>, unit: impl Into<UnitId>) -> Self {
        Self {
            app: app.into(),
            unit: unit.into(),
        }
    }
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.app, self.unit)
    }
}

/// Capability tags a container can host.
pub mod services {
    pub const TASK_EXEC: &str = "task-exec";
    pub const MAPREDUCE_EXEC: &str = "mapreduce-exec";
    pub const STORAGE: &str = "storage";
}

/// One file in a staging manifest.
///
/// `content_ref` points at real bytes (a path in real mode, a blob key in
/// simulation); it is absent when only the declared size matters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSpec {
    pub logical_name: String,
    #[serde(default)]
    pub size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_ref: Option<String>,
}

impl FileSpec {
    pub fn sized(name: impl Into<String>, size_bytes: u64) -> Self {
        Self {
            logical_name: name.into(),
            size_bytes,
            content_ref: None,
        }
    }

    pub fn with_ref(name: impl Into<String>, size_bytes: u64, content_ref: impl Into<String>) -> Self {
        Self {
            logical_name: name.into(),
            size_bytes,
            content_ref: Some(content_ref.into()),
        }
    }
}

/// An external command with its staging manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<FileSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<FileSpec>,
    /// Declared duration when executed on a virtual clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_duration_s: Option<f64>,
}

impl CommandSpec {
    pub fn shell(program: impl Into<String>, args: &[&str]) -> Self {
        Self {
            program: program.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            sim_duration_s: None,
        }
    }

    pub fn simulated(duration_s: f64) -> Self {
        Self {
            program: String::new(),
            args: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            sim_duration_s: Some(duration_s),
        }
    }
}

/// A map step over one input partition; emits `reducers` intermediate files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStep {
    pub mapper: String,
    pub partition: FileSpec,
    pub reducers: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<FileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_duration_s: Option<f64>,
}

/// A reduce step over one intermediate partition index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceStep {
    pub reducer: String,
    pub index: u32,
    pub inputs: Vec<FileSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<FileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_duration_s: Option<f64>,
}

/// What a unit actually does: an external command, or a reference to a
/// built-in MapReduce operator (no code shipping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UnitWork {
    Command(CommandSpec),
    Map(MapStep),
    Reduce(ReduceStep),
}

impl UnitWork {
    /// Capability tag a container must host to run this unit.
    pub fn required_service(&self) -> &'static str {
        match self {
            UnitWork::Command(_) => services::TASK_EXEC,
            UnitWork::Map(_) | UnitWork::Reduce(_) => services::MAPREDUCE_EXEC,
        }
    }

    pub fn inputs(&self) -> Vec<FileSpec> {
        match self {
            UnitWork::Command(c) => c.inputs.clone(),
            UnitWork::Map(m) => vec![m.partition.clone()],
            UnitWork::Reduce(r) => r.inputs.clone(),
        }
    }

    pub fn outputs(&self) -> &[FileSpec] {
        match self {
            UnitWork::Command(c) => &c.outputs,
            UnitWork::Map(m) => &m.outputs,
            UnitWork::Reduce(r) => &r.outputs,
        }
    }

    pub fn sim_duration_s(&self) -> Option<f64> {
        match self {
            UnitWork::Command(c) => c.sim_duration_s,
            UnitWork::Map(m) => Some(m.sim_duration_s.unwrap_or(0.0)),
            UnitWork::Reduce(r) => Some(r.sim_duration_s.unwrap_or(0.0)),
        }
    }
}

/// Lifecycle states of an execution unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitState {
    Pending,
    Staged,
    Dispatched,
    Running,
    Completed,
    Failed,
}

impl UnitState {
    pub fn is_terminal(self) -> bool {
        matches!(self, UnitState::Completed | UnitState::Failed)
    }
}

impl fmt::Display for UnitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnitState::Pending => "pending",
            UnitState::Staged => "staged",
            UnitState::Dispatched => "dispatched",
            UnitState::Running => "running",
            UnitState::Completed => "completed",
            UnitState::Failed => "failed",
        };
        f.write_str(s)
    }
}

/// Millisecond timestamps collected along a unit's lifecycle. In simulation
/// these are virtual-clock ticks with identical semantics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub submitted: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dispatched: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ended: Option<u64>,
}

/// Outcome attached to a terminal unit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One schedulable work item of an application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionUnit {
    pub unit_id: UnitId,
    pub app_id: AppId,
    pub work: UnitWork,
    pub state: UnitState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assigned_node: Option<NodeId>,
    pub attempts: u32,
    #[serde(default)]
    pub timestamps: Timestamps,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<UnitResult>,
}

impl ExecutionUnit {
    pub fn new(app_id: AppId, unit_id: UnitId, work: UnitWork) -> Self {
        Self {
            unit_id,
            app_id,
            work,
            state: UnitState::Pending,
            assigned_node: None,
            attempts: 1,
            timestamps: Timestamps::default(),
            result: None,
        }
    }

    pub fn key(&self) -> UnitKey {
        UnitKey {
            app: self.app_id.clone(),
            unit: self.unit_id.clone(),
        }
    }
}

/// Programming model of an application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Task,
    Psm,
    MapReduce,
    Workflow,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Task => "task",
            ModelKind::Psm => "psm",
            ModelKind::MapReduce => "mapreduce",
            ModelKind::Workflow => "workflow",
        };
        f.write_str(s)
    }
}

/// Bag of independent tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub tasks: Vec<CommandSpec>,
}

/// One sweep parameter and its value list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub values: Vec<String>,
}

/// Parameter-sweep model: a task template plus an ordered parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsmPayload {
    pub template: CommandSpec,
    pub parameters: Vec<Parameter>,
}

/// MapReduce model: named operators plus a partitioned input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReducePayload {
    pub mapper: String,
    pub reducer: String,
    pub input: Vec<FileSpec>,
    pub reducers: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce_duration_s: Option<f64>,
}

/// A file moving along a workflow edge; size doubles as synthetic load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoFile {
    pub file: String,
    pub size_bytes: u64,
}

impl IoFile {
    pub fn new(file: impl Into<String>, size_bytes: u64) -> Self {
        Self {
            file: file.into(),
            size_bytes,
        }
    }
}

/// One task of a workflow DAG.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<IoFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<IoFile>,
}

/// Workflow model: interrelated tasks composing a DAG.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowPayload {
    pub tasks: BTreeMap<String, WorkflowTask>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

/// Model-specific payload, tagged by model kind on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "payload", rename_all = "lowercase")]
pub enum ModelPayload {
    Task(TaskPayload),
    Psm(PsmPayload),
    MapReduce(MapReducePayload),
    Workflow(WorkflowPayload),
}

impl ModelPayload {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelPayload::Task(_) => ModelKind::Task,
            ModelPayload::Psm(_) => ModelKind::Psm,
            ModelPayload::MapReduce(_) => ModelKind::MapReduce,
            ModelPayload::Workflow(_) => ModelKind::Workflow,
        }
    }
}

/// The unit of deployment: ownership, shared files and a model payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationDescriptor {
    /// Assigned by the master when absent from the submission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_id: Option<AppId>,
    pub owner: String,
    #[serde(flatten)]
    pub model: ModelPayload,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared_files: Vec<FileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<u64>,
}

impl ApplicationDescriptor {
    pub fn new(owner: impl Into<String>, model: ModelPayload) -> Self {
        Self {
            app_id: None,
            owner: owner.into(),
            model,
            shared_files: Vec::new(),
            submitted_at: None,
        }
    }
}

/// Where a node comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeOrigin {
    Physical,
    Provisioned,
}

/// A container's advertised identity and capabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub node_id: NodeId,
    pub address: String,
    pub cores: u32,
    pub memory_mb: u64,
    pub os_tag: String,
    pub services: BTreeSet<String>,
    pub origin: NodeOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lease_start: Option<u64>,
}

impl NodeDescriptor {
    pub fn hosts(&self, service: &str) -> bool {
        self.services.contains(service)
    }

    /// Structural checks every registry entry must pass.
    pub fn validate(&self) -> Result<(), String> {
        if self.node_id.is_empty() {
            return Err("empty node_id".into());
        }
        if self.cores == 0 {
            return Err("cores must be >= 1".into());
        }
        if self.services.is_empty() {
            return Err("node hosts no services".into());
        }
        if self.origin == NodeOrigin::Provisioned
            && (self.instance_type.is_none() || self.lease_start.is_none())
        {
            return Err("provisioned node lacks instance_type or lease_start".into());
        }
        Ok(())
    }
}

/// Strings accepted by [`ModelKind`]'s serde form, for CLI parsing.
pub fn parse_model_kind(s: &str) -> Option<ModelKind> {
    match s {
        "task" => Some(ModelKind::Task),
        "psm" => Some(ModelKind::Psm),
        "mapreduce" => Some(ModelKind::MapReduce),
        "workflow" => Some(ModelKind::Workflow),
        _ => None,
    }
}
