//! Built-in MapReduce operators, registered by name so the same payload
//! runs identically everywhere without shipping code.
//!
//! Mappers: `word-count` (one `(token, "1")` per whitespace token) and
//! `token-grep-count:<pattern>` (same, restricted to tokens containing the
//! pattern). Reducer: `integer-sum`.
//!
//! Intermediate records travel as JSON lines `["key","value"]`; keys are
//! routed to reducer `fnv1a64(key) mod R`.

use crate::types::{MapStep, ReduceStep};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the raw bytes; the partitioner hash, identical across
/// implementations by construction.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub fn partition_for_key(key: &str, reducers: u32) -> u32 {
    (fnv1a64(key.as_bytes()) % reducers as u64) as u32
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mapper {
    WordCount,
    TokenGrepCount(String),
}

impl Mapper {
    pub fn apply(&self, input: &str) -> Vec<(String, String)> {
        match self {
            Mapper::WordCount => input
                .split_whitespace()
                .map(|t| (t.to_string(), "1".to_string()))
                .collect(),
            Mapper::TokenGrepCount(pattern) => input
                .split_whitespace()
                .filter(|t| t.contains(pattern.as_str()))
                .map(|t| (t.to_string(), "1".to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    IntegerSum,
}

impl Reducer {
    pub fn apply(&self, _key: &str, values: &[String]) -> Result<String, String> {
        match self {
            Reducer::IntegerSum => {
                let mut sum: i64 = 0;
                for v in values {
                    sum += v
                        .parse::<i64>()
                        .map_err(|_| format!("integer-sum: non-integer value {v:?}"))?;
                }
                Ok(sum.to_string())
            }
        }
    }
}

/// Looks up a mapper. `token-grep-count:<pattern>` carries its argument in
/// the name, colon-separated.
pub fn mapper(name: &str) -> Option<Mapper> {
    if name == "word-count" {
        return Some(Mapper::WordCount);
    }
    if let Some(pattern) = name.strip_prefix("token-grep-count:") {
        if !pattern.is_empty() {
            return Some(Mapper::TokenGrepCount(pattern.to_string()));
        }
    }
    None
}

pub fn reducer(name: &str) -> Option<Reducer> {
    match name {
        "integer-sum" => Some(Reducer::IntegerSum),
        _ => None,
    }
}

/// Serializes records as JSON lines, one `["key","value"]` array per line.
pub fn write_records(records: &[(String, String)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, v) in records {
        let line = serde_json::to_string(&(k, v)).expect("string pair serializes");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn read_records(bytes: &[u8]) -> Result<Vec<(String, String)>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("record file not UTF-8: {e}"))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let pair: (String, String) = serde_json::from_str(line)
            .map_err(|e| format!("bad record at line {}: {e}", lineno + 1))?;
        out.push(pair);
    }
    Ok(out)
}

/// Runs one map step over its partition bytes, returning the `R`
/// intermediate partition files in reducer-index order.
pub fn run_map_step(step: &MapStep, input: &[u8]) -> Result<Vec<Vec<u8>>, String> {
    let m = mapper(&step.mapper).ok_or_else(|| format!("no mapper {:?}", step.mapper))?;
    let text = std::str::from_utf8(input).map_err(|e| format!("partition not UTF-8: {e}"))?;
    let mut buckets: Vec<Vec<(String, String)>> = vec![Vec::new(); step.reducers as usize];
    for (k, v) in m.apply(text) {
        let idx = partition_for_key(&k, step.reducers) as usize;
        buckets[idx].push((k, v));
    }
    Ok(buckets.iter().map(|b| write_records(b)).collect())
}

/// Runs one reduce step over its intermediate partitions: groups by key,
/// reduces each group, and emits `(key, reduced)` records in key order.
pub fn run_reduce_step(step: &ReduceStep, inputs: &[Vec<u8>]) -> Result<Vec<u8>, String> {
    let r = reducer(&step.reducer).ok_or_else(|| format!("no reducer {:?}", step.reducer))?;
    let mut groups: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    for bytes in inputs {
        for (k, v) in read_records(bytes)? {
            groups.entry(k).or_default().push(v);
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (k, vs) in groups {
        let reduced = r.apply(&k, &vs)?;
        out.push((k, reduced));
    }
    Ok(write_records(&out))
}
