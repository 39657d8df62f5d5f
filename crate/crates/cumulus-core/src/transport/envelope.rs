//! Wire envelope and its length-prefixed JSON framing.
//!
//! Frame layout: a 4-byte big-endian unsigned length `N` followed by `N`
//! bytes of UTF-8 JSON for the envelope object, keys `["t","s","q","p"]`
//! in that order. Length-prefixed JSON beats a binary schema here:
//! debuggability matters more than compactness at desk scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::messages;

/// Frames larger than this are rejected on both paths.
pub const MAX_FRAME_BYTES: usize = i32::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    /// Message type tag, drawn from the registered catalog.
    #[serde(rename = "t")]
    pub msg_type: String,
    /// Sending endpoint id.
    #[serde(rename = "s")]
    pub sender: String,
    /// Per-sender sequence number, strictly increasing per connection.
    #[serde(rename = "q")]
    pub seq: u64,
    /// Message body.
    #[serde(rename = "p")]
    pub payload: serde_json::Value,
}

impl Envelope {
    pub fn new(
        msg_type: impl Into<String>,
        sender: impl Into<String>,
        seq: u64,
        payload: serde_json::Value,
    ) -> Self {
        Self {
            msg_type: msg_type.into(),
            sender: sender.into(),
            seq,
            payload,
        }
    }

    pub fn parse_payload<T: serde::de::DeserializeOwned>(&self) -> Result<T, CodecError> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| CodecError::MalformedFrame(format!("{} payload: {e}", self.msg_type)))
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("payload too large: {0} bytes")]
    PayloadTooLarge(usize),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
}

/// Encodes one envelope into a framed byte sequence.
pub fn encode(envelope: &Envelope) -> Result<Vec<u8>, CodecError> {
    let body = serde_json::to_vec(envelope)
        .map_err(|e| CodecError::MalformedFrame(format!("unserializable payload: {e}")))?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(CodecError::PayloadTooLarge(body.len()));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Streaming frame decoder: feed it byte chunks with arbitrary boundaries
/// and it yields complete envelopes in order.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Consumes a chunk, returning every envelope it completes.
    ///
    /// Unknown message types and invalid JSON are `MalformedFrame`: the
    /// caller is expected to drop the connection.
    pub fn push(&mut self, chunk: &[u8]) -> Result<Vec<Envelope>, CodecError> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        loop {
            if self.buf.len() < 4 {
                break;
            }
            let len = u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize;
            if len > MAX_FRAME_BYTES {
                return Err(CodecError::PayloadTooLarge(len));
            }
            if self.buf.len() < 4 + len {
                break;
            }
            let env: Envelope = serde_json::from_slice(&self.buf[4..4 + len])
                .map_err(|e| CodecError::MalformedFrame(e.to_string()))?;
            if !messages::is_known_type(&env.msg_type) {
                return Err(CodecError::MalformedFrame(format!(
                    "unknown msg_type {:?}",
                    env.msg_type
                )));
            }
            self.buf.drain(..4 + len);
            out.push(env);
        }
        Ok(out)
    }

    /// Call when the peer closes: leftover bytes mean a truncated frame.
    pub fn finish(&self) -> Result<(), CodecError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(CodecError::MalformedFrame(format!(
                "connection closed mid-frame with {} buffered bytes",
                self.buf.len()
            )))
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn env(payload: serde_json::Value) -> Envelope {
        Envelope::new(messages::HEARTBEAT, "node-1", 7, payload)
    }

    #[test]
    fn frame_is_length_prefixed_with_fixed_key_order() {
        let e = Envelope::new(messages::HEARTBEAT, "a", 1, json!({}));
        let frame = encode(&e).unwrap();
        let len = u32::from_be_bytes([frame[0], frame[1], frame[2], frame[3]]) as usize;
        assert_eq!(len, frame.len() - 4);
        let body = std::str::from_utf8(&frame[4..]).unwrap();
        assert_eq!(body, r#"{"t":"heartbeat","s":"a","q":1,"p":{}}"#);
    }

    #[test]
    fn seven_byte_body_gets_seven_byte_prefix() {
        // Framing rule check against hand-built bytes.
        let body = br#"{"x":1}"#;
        let mut frame = vec![0, 0, 0, 7];
        frame.extend_from_slice(body);
        assert_eq!(frame[..4], [0x00, 0x00, 0x00, 0x07]);
        assert_eq!(&frame[4..], body);
    }

    #[test]
    fn round_trip() {
        let e = env(json!({"node_id": "node-1", "list": [1, 2, 3]}));
        let frame = encode(&e).unwrap();
        let mut dec = FrameDecoder::new();
        let got = dec.push(&frame).unwrap();
        assert_eq!(got, vec![e]);
        assert!(dec.finish().is_ok());
    }

    #[test]
    fn two_frames_in_one_chunk() {
        let e1 = env(json!({"n": 1}));
        let e2 = env(json!({"n": 2}));
        let mut bytes = encode(&e1).unwrap();
        bytes.extend(encode(&e2).unwrap());
        let got = FrameDecoder::new().push(&bytes).unwrap();
        assert_eq!(got, vec![e1, e2]);
    }

    #[test]
    fn one_frame_split_across_five_chunks() {
        let e = env(json!({"blob": "x".repeat(64)}));
        let frame = encode(&e).unwrap();
        let mut dec = FrameDecoder::new();
        let step = frame.len() / 5 + 1;
        let mut got = Vec::new();
        for chunk in frame.chunks(step) {
            got.extend(dec.push(chunk).unwrap());
        }
        assert_eq!(got, vec![e]);
    }

    #[test]
    fn truncated_frame_waits_then_errors_on_close() {
        let e = env(json!({"n": 1}));
        let frame = encode(&e).unwrap();
        let mut dec = FrameDecoder::new();
        assert!(dec.push(&frame[..4]).unwrap().is_empty());
        let err = dec.finish().unwrap_err();
        assert!(matches!(err, CodecError::MalformedFrame(_)));
    }

    #[test]
    fn garbage_length_prefix_is_rejected() {
        let mut dec = FrameDecoder::new();
        let err = dec.push(&[0xFF, 0xFF, 0xFF, 0xFF]).unwrap_err();
        assert!(matches!(err, CodecError::PayloadTooLarge(_)));
    }

    #[test]
    fn unknown_msg_type_is_malformed() {
        let e = Envelope::new("no-such-type", "a", 1, json!({}));
        let frame = encode(&e).unwrap();
        let err = FrameDecoder::new().push(&frame).unwrap_err();
        assert!(matches!(err, CodecError::MalformedFrame(_)));
    }
}
