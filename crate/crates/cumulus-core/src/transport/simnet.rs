//! Deterministic in-process network with a virtual clock.
//!
//! Transfer time for a message of `size` bytes on a link is
//! `latency + size / bandwidth`; there is no contention model beyond the
//! distinction between intra-cloud and client-to-cloud link classes.
//! Delivery is FIFO per directed link, and the whole schedule is a pure
//! function of `(seed, send script)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::BTreeMap;

use super::envelope::{encode, Envelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    IntraCloud,
    ClientToCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRange {
    pub min_ms: u64,
    pub max_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub latency: LatencyRange,
    pub bandwidth_bytes_per_s: u64,
}

impl LinkSpec {
    pub const fn new(min_ms: u64, max_ms: u64, bandwidth_bytes_per_s: u64) -> Self {
        Self {
            latency: LatencyRange { min_ms, max_ms },
            bandwidth_bytes_per_s,
        }
    }

    /// Zero latency, effectively infinite bandwidth.
    pub const fn instant() -> Self {
        Self::new(0, 0, u64::MAX)
    }

    /// Transmission milliseconds for `size` bytes, latency sampled from `rng`.
    pub fn transfer_ms(&self, rng: &mut impl Rng, size_bytes: u64) -> u64 {
        let latency = if self.latency.min_ms == self.latency.max_ms {
            self.latency.min_ms
        } else {
            rng.gen_range(self.latency.min_ms..=self.latency.max_ms)
        };
        latency + serialization_ms(size_bytes, self.bandwidth_bytes_per_s)
    }
}

/// `ceil(size * 1000 / bandwidth)` in 128-bit to dodge overflow.
pub fn serialization_ms(size_bytes: u64, bandwidth_bytes_per_s: u64) -> u64 {
    if size_bytes == 0 {
        return 0;
    }
    let num = size_bytes as u128 * 1000;
    let den = bandwidth_bytes_per_s as u128;
    num.div_ceil(den) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Real,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimNetConfig {
    pub seed: u64,
    pub intra_cloud: LinkSpec,
    pub client_to_cloud: LinkSpec,
    pub clock_mode: ClockMode,
}

impl SimNetConfig {
    /// Defaults are configuration, not claims about any particular site.
    pub fn default_virtual(seed: u64) -> Self {
        Self {
            seed,
            intra_cloud: LinkSpec::new(1, 1, 10_000_000),
            client_to_cloud: LinkSpec::new(20, 40, 1_000_000),
            clock_mode: ClockMode::Virtual,
        }
    }

    /// Zero-latency, infinite-bandwidth config: delivery at the send tick.
    pub fn instant(seed: u64) -> Self {
        Self {
            seed,
            intra_cloud: LinkSpec::instant(),
            client_to_cloud: LinkSpec::instant(),
            clock_mode: ClockMode::Virtual,
        }
    }

    pub fn link(&self, class: LinkClass) -> LinkSpec {
        match class {
            LinkClass::IntraCloud => self.intra_cloud,
            LinkClass::ClientToCloud => self.client_to_cloud,
        }
    }

    pub fn validate(&self) -> Result<(), SimNetError> {
        for (name, spec) in [
            ("intra_cloud", self.intra_cloud),
            ("client_to_cloud", self.client_to_cloud),
        ] {
            if spec.latency.min_ms > spec.latency.max_ms {
                return Err(SimNetError::BadConfig(format!(
                    "{name}: latency min > max"
                )));
            }
            if spec.bandwidth_bytes_per_s == 0 {
                return Err(SimNetError::BadConfig(format!("{name}: zero bandwidth")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimNetError {
    #[error("invalid simnet config: {0}")]
    BadConfig(String),
    #[error("simnet requires clock_mode=virtual")]
    NotVirtual,
    #[error(transparent)]
    Codec(#[from] super::envelope::CodecError),
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at: u64,
    seq: u64,
    envelope: Envelope,
    recipient: String,
}

/// The simulated network state: holds in-flight envelopes and their
/// deterministic delivery schedule.
#[derive(Debug)]
pub struct SimNet {
    cfg: SimNetConfig,
    rng: ChaCha8Rng,
    queue: Vec<InFlight>,
    /// Last scheduled delivery per directed (sender, recipient) link.
    link_tail: BTreeMap<(String, String), u64>,
    next_seq: u64,
}

impl SimNet {
    pub fn new(cfg: SimNetConfig) -> Result<Self, SimNetError> {
        cfg.validate()?;
        if cfg.clock_mode != ClockMode::Virtual {
            return Err(SimNetError::NotVirtual);
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            queue: Vec::new(),
            link_tail: BTreeMap::new(),
            next_seq: 0,
        })
    }

    /// Queues an envelope for delivery. Size is the encoded frame length.
    pub fn send(
        &mut self,
        envelope: Envelope,
        recipient: impl Into<String>,
        class: LinkClass,
        now: u64,
    ) -> Result<(), SimNetError> {
        let size = encode(&envelope)?.len() as u64;
        let recipient = recipient.into();
        let spec = self.cfg.link(class);
        let raw = now + spec.transfer_ms(&mut self.rng, size);
        // FIFO per link: never deliver before an earlier message on the
        // same (sender, recipient) pair.
        let key = (envelope.sender.clone(), recipient.clone());
        let deliver_at = match self.link_tail.get(&key) {
            Some(tail) => raw.max(*tail),
            None => raw,
        };
        self.link_tail.insert(key, deliver_at);
        self.queue.push(InFlight {
            deliver_at,
            seq: self.next_seq,
            envelope,
            recipient,
        });
        self.next_seq += 1;
        Ok(())
    }

    /// Earliest pending delivery time, if any.
    pub fn next_delivery(&self) -> Option<u64> {
        self.queue.iter().map(|m| m.deliver_at).min()
    }

    /// Removes and returns every envelope due at or before `now`,
    /// in (delivery time, send order).
    pub fn deliver_due(&mut self, now: u64) -> Vec<(Envelope, String)> {
        let mut due: Vec<InFlight> = Vec::new();
        let mut rest: Vec<InFlight> = Vec::new();
        for m in self.queue.drain(..) {
            if m.deliver_at <= now {
                due.push(m);
            } else {
                rest.push(m);
            }
        }
        self.queue = rest;
        due.sort_by_key(|m| (m.deliver_at, m.seq));
        due.into_iter().map(|m| (m.envelope, m.recipient)).collect()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
