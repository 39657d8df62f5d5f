//! Message envelope codec, the registered message catalog, and the
//! deterministic simulated network.

pub mod envelope;
pub mod messages;
pub mod simnet;

pub use envelope::{encode, CodecError, Envelope, FrameDecoder, MAX_FRAME_BYTES};
pub use simnet::{ClockMode, LinkClass, LinkSpec, SimNet, SimNetConfig};
