//! Cumulus core: a miniature platform middleware engine.
//!
//! Networked node containers report to a master that expands applications
//! into execution units, dispatches one task per core, meters usage by the
//! minute, and can lease extra nodes from an hourly-billed provider. The
//! [`sim`] module runs the whole pipeline on a deterministic virtual clock.

pub mod accounting;
pub mod lifecycle;
pub mod membership;
pub mod models;
pub mod money;
pub mod provisioning;
pub mod scheduler;
pub mod sim;
pub mod transport;
pub mod types;
pub mod validate;

pub use money::Money;
pub use types::{
    AppId, ApplicationDescriptor, CommandSpec, ExecutionUnit, FileSpec, ModelKind, ModelPayload,
    NodeDescriptor, NodeId, NodeOrigin, UnitId, UnitKey, UnitState,
};
