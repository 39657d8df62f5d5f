//! Registered message catalog and payload schemas for master, node and
//! client traffic. Every `Envelope::msg_type` must come from this list;
//! the decoder drops connections that send anything else.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accounting::{Aggregates, UsageFilter, UsageRecord};
use crate::money::Money;
use crate::types::{AppId, ApplicationDescriptor, ExecutionUnit, NodeDescriptor, UnitId};

// Node <-> master.
pub const REGISTER: &str = "register";
pub const REGISTER_ACK: &str = "register_ack";
pub const HEARTBEAT: &str = "heartbeat";
pub const FILE_PUT: &str = "file_put";
pub const DISPATCH: &str = "dispatch";
pub const UNIT_STARTED: &str = "unit_started";
pub const UNIT_RESULT: &str = "unit_result";
pub const DEREGISTER: &str = "deregister";
pub const STOP_NODE: &str = "stop_node";

// Client <-> master.
pub const SUBMIT: &str = "submit";
pub const SUBMIT_ACK: &str = "submit_ack";
pub const STATUS_REQ: &str = "status_req";
pub const STATUS_RESP: &str = "status_resp";
pub const NODES_REQ: &str = "nodes_req";
pub const NODES_RESP: &str = "nodes_resp";
pub const POOL_REQ: &str = "pool_req";
pub const POOL_RESP: &str = "pool_resp";
pub const USAGE_REQ: &str = "usage_req";
pub const USAGE_RESP: &str = "usage_resp";
pub const INVOICE_REQ: &str = "invoice_req";
pub const INVOICE_RESP: &str = "invoice_resp";
pub const ERROR_RESP: &str = "error_resp";

const CATALOG: &[&str] = &[
    REGISTER,
    REGISTER_ACK,
    HEARTBEAT,
    FILE_PUT,
    DISPATCH,
    UNIT_STARTED,
    UNIT_RESULT,
    DEREGISTER,
    STOP_NODE,
    SUBMIT,
    SUBMIT_ACK,
    STATUS_REQ,
    STATUS_RESP,
    NODES_REQ,
    NODES_RESP,
    POOL_REQ,
    POOL_RESP,
    USAGE_REQ,
    USAGE_RESP,
    INVOICE_REQ,
    INVOICE_RESP,
    ERROR_RESP,
];

pub fn is_known_type(t: &str) -> bool {
    CATALOG.contains(&t)
}

pub fn catalog() -> &'static [&'static str] {
    CATALOG
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Register {
    pub descriptor: NodeDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterAck {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub heartbeat_interval_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Heartbeat {
    pub node_id: String,
}

/// Which slot of the work directory a staged file lands in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum FileScope {
    Shared,
    UnitInput { unit_id: UnitId },
    UnitOutput { unit_id: UnitId },
}

/// One staged file, base64-encoded. Desk-scale files travel whole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilePut {
    pub app_id: AppId,
    #[serde(flatten)]
    pub scope: FileScope,
    pub name: String,
    pub data_b64: String,
}

impl FilePut {
    pub fn new(app_id: AppId, scope: FileScope, name: impl Into<String>, data: &[u8]) -> Self {
        use base64::Engine as _;
        Self {
            app_id,
            scope,
            name: name.into(),
            data_b64: base64::engine::general_purpose::STANDARD.encode(data),
        }
    }

    pub fn decode_data(&self) -> Result<Vec<u8>, String> {
        use base64::Engine as _;
        base64::engine::general_purpose::STANDARD
            .decode(&self.data_b64)
            .map_err(|e| format!("bad base64 in file_put: {e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dispatch {
    pub unit: ExecutionUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitStarted {
    pub app_id: AppId,
    pub unit_id: UnitId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ExecOutcome {
    Completed {
        exit_code: i32,
        outputs: Vec<String>,
    },
    Failed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exit_code: Option<i32>,
        error: String,
    },
    /// The node could not accept the unit (missing inputs, draining,
    /// service not hosted); the scheduler requeues or fails it.
    Rejected { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitResultMsg {
    pub app_id: AppId,
    pub unit_id: UnitId,
    #[serde(flatten)]
    pub outcome: ExecOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Deregister {
    pub node_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMode {
    Graceful,
    Abrupt,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopNode {
    pub mode: StopMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Submit {
    pub descriptor: ApplicationDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitAck {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_id: Option<AppId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusReq {
    pub app_id: AppId,
}

/// Read-only application snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppStatusView {
    pub app_id: AppId,
    pub owner: String,
    pub model: String,
    pub state: String,
    pub counts: BTreeMap<String, usize>,
    pub total_units: usize,
    pub submitted_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_ms: Option<u64>,
    pub makespan_ms: u64,
}

impl AppStatusView {
    pub fn finished(&self) -> bool {
        self.state != "running"
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodesResp {
    pub nodes: Vec<NodeView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeView {
    pub node_id: String,
    pub address: String,
    pub cores: u32,
    pub free_cores: u32,
    pub origin: String,
    pub services: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_type: Option<String>,
    pub last_heartbeat_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolResp {
    pub instances: Vec<InstanceView>,
    pub active: usize,
    pub total_cost: Money,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceView {
    pub instance_id: String,
    pub instance_type: String,
    pub state: String,
    pub uptime_ms: u64,
    pub accrued_cost: Money,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsageReq {
    #[serde(default)]
    pub filter: UsageFilter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsageResp {
    pub records: Vec<UsageRecord>,
    pub aggregates: Aggregates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvoiceReq {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    /// Apportion the provider cost of the resource pool instead of pricing
    /// metered minutes.
    #[serde(default)]
    pub middleman: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvoiceResp {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invoices: Vec<crate::accounting::Invoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<BTreeMap<String, Money>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorResp {
    pub message: String,
}
