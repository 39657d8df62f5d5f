//! Usage metering and pricing. Execution is tracked by the minute, per
//! user and application; the history is an append-only JSON-lines ledger.
//! Failed units are billed too: the compute was consumed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;
use crate::types::{AppId, NodeId, UnitId};

/// One metered execution: wall minutes rounded up, minimum one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub user: String,
    pub app_id: AppId,
    pub unit_id: UnitId,
    pub node_id: NodeId,
    pub wall_minutes: u64,
    pub started_ms: u64,
    pub ended_ms: u64,
}

impl UsageRecord {
    pub fn from_times(
        user: String,
        app_id: AppId,
        unit_id: UnitId,
        node_id: NodeId,
        started_ms: u64,
        ended_ms: u64,
    ) -> Self {
        Self {
            user,
            app_id,
            unit_id,
            node_id,
            wall_minutes: wall_minutes(started_ms, ended_ms),
            started_ms,
            ended_ms,
        }
    }
}

/// `max(1, ceil(elapsed / 60 s))`.
pub fn wall_minutes(started_ms: u64, ended_ms: u64) -> u64 {
    let elapsed = ended_ms.saturating_sub(started_ms);
    elapsed.div_ceil(60_000).max(1)
}

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("no price for resource {0}")]
    UnpricedResource(String),
    #[error("ledger i/o: {0}")]
    Ledger(#[from] std::io::Error),
    #[error("ledger parse: {0}")]
    LedgerParse(String),
}

/// Whether an append actually recorded anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordOutcome {
    Recorded,
    /// Same unit already metered; idempotence wins.
    Duplicate,
}

/// Append-only record store, optionally backed by a `ledger.jsonl` file.
#[derive(Debug, Default)]
pub struct UsageStore {
    records: Vec<UsageRecord>,
    seen: BTreeSet<(AppId, UnitId)>,
    ledger: Option<(PathBuf, File)>,
}

impl UsageStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a ledger file and replays its records.
    pub fn with_ledger(path: impl AsRef<Path>) -> Result<Self, AccountingError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: UsageRecord = serde_json::from_str(&line)
                    .map_err(|e| AccountingError::LedgerParse(format!("line {}: {e}", i + 1)))?;
                store.seen.insert((rec.app_id.clone(), rec.unit_id.clone()));
                store.records.push(rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        store.ledger = Some((path, file));
        Ok(store)
    }

    /// Appends a record; duplicates (same app/unit) are ignored.
    pub fn record(&mut self, rec: UsageRecord) -> Result<RecordOutcome, AccountingError> {
        let key = (rec.app_id.clone(), rec.unit_id.clone());
        if !self.seen.insert(key) {
            return Ok(RecordOutcome::Duplicate);
        }
        if let Some((_, file)) = &mut self.ledger {
            let line = serde_json::to_string(&rec)
                .map_err(|e| AccountingError::LedgerParse(e.to_string()))?;
            writeln!(file, "{line}")?;
        }
        self.records.push(rec);
        Ok(RecordOutcome::Recorded)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[UsageRecord] {
        &self.records
    }

    /// Matching records, node then unit ordered, plus aggregates.
    pub fn report(&self, filter: &UsageFilter) -> (Vec<UsageRecord>, Aggregates) {
        let mut hits: Vec<UsageRecord> = self
            .records
            .iter()
            .filter(|r| filter.matches(r))
            .cloned()
            .collect();
        hits.sort_by(|a, b| {
            (&a.node_id, &a.unit_id, &a.app_id).cmp(&(&b.node_id, &b.unit_id, &b.app_id))
        });
        let mut agg = Aggregates::default();
        for r in &hits {
            agg.total_minutes += r.wall_minutes;
            *agg.per_app.entry(r.app_id.clone()).or_default() += r.wall_minutes;
        }
        (hits, agg)
    }
}

/// Conjunctive record filter; `period` is a half-open `[start, end)`
/// window over the record's end time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_id: Option<AppId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<(u64, u64)>,
}

impl UsageFilter {
    pub fn matches(&self, r: &UsageRecord) -> bool {
        if let Some(u) = &self.user {
            if &r.user != u {
                return false;
            }
        }
        if let Some(a) = &self.app_id {
            if &r.app_id != a {
                return false;
            }
        }
        if let Some((start, end)) = self.period {
            if r.ended_ms < start || r.ended_ms >= end {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total_minutes: u64,
    pub per_app: BTreeMap<AppId, u64>,
}

/// Prices per metered minute, keyed by node id or instance type; the
/// reserved key `"*"` prices anything unmatched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    pub entries: BTreeMap<String, Money>,
}

impl PriceTable {
    pub fn new(entries: BTreeMap<String, Money>) -> Self {
        Self { entries }
    }

    pub fn set(&mut self, key: impl Into<String>, price: Money) {
        self.entries.insert(key.into(), price);
    }

    pub fn price_for(&self, node_id: &str, instance_type: Option<&str>) -> Option<Money> {
        if let Some(p) = self.entries.get(node_id) {
            return Some(*p);
        }
        if let Some(t) = instance_type {
            if let Some(p) = self.entries.get(t) {
                return Some(*p);
            }
        }
        self.entries.get("*").copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvoiceLine {
    pub app_id: AppId,
    pub minutes: u64,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<(u64, u64)>,
    pub lines: Vec<InvoiceLine>,
    pub total: Money,
}

/// Weighted sum of execution-unit minutes at per-resource prices: one
/// invoice per user, users in ascending order, totals exact.
pub fn price_weighted_sum(
    records: &[UsageRecord],
    table: &PriceTable,
    resolve_type: impl Fn(&NodeId) -> Option<String>,
) -> Result<Vec<Invoice>, AccountingError> {
    // user -> app -> (minutes, amount)
    let mut per_user: BTreeMap<String, BTreeMap<AppId, (u64, Money)>> = BTreeMap::new();
    for r in records {
        let itype = resolve_type(&r.node_id);
        let price = table
            .price_for(r.node_id.as_str(), itype.as_deref())
            .ok_or_else(|| AccountingError::UnpricedResource(r.node_id.to_string()))?;
        let slot = per_user
            .entry(r.user.clone())
            .or_default()
            .entry(r.app_id.clone())
            .or_insert((0, Money::ZERO));
        slot.0 += r.wall_minutes;
        slot.1 += price.times(r.wall_minutes);
    }
    Ok(per_user
        .into_iter()
        .map(|(user, apps)| {
            let lines: Vec<InvoiceLine> = apps
                .into_iter()
                .map(|(app_id, (minutes, amount))| InvoiceLine {
                    app_id,
                    minutes,
                    amount,
                })
                .collect();
            let total = lines.iter().map(|l| l.amount).sum();
            Invoice {
                user,
                period: None,
                lines,
                total,
            }
        })
        .collect())
}

/// Reserved account that absorbs provider cost when nobody used anything.
pub const PLATFORM_ACCOUNT: &str = "platform";

/// Splits an actual provider bill across users proportionally to metered
/// minutes, with largest-remainder rounding so the shares sum to the bill
/// exactly. Zero usage sends the whole bill to the platform account.
pub fn price_middleman_share(
    records: &[UsageRecord],
    provider_cost: Money,
    period: Option<(u64, u64)>,
) -> BTreeMap<String, Money> {
    let filter = UsageFilter {
        period,
        ..Default::default()
    };
    let mut minutes: BTreeMap<String, u64> = BTreeMap::new();
    for r in records.iter().filter(|r| filter.matches(r)) {
        *minutes.entry(r.user.clone()).or_default() += r.wall_minutes;
    }
    let total: u64 = minutes.values().sum();
    let mut shares = BTreeMap::new();
    if total == 0 {
        shares.insert(PLATFORM_ACCOUNT.to_string(), provider_cost);
        return shares;
    }

    // Floor each share in micro-units, then hand the remainder out by
    // largest fractional part (ties by user id) so the sum is exact.
    let cost = provider_cost.micros() as i128;
    let mut floored: Vec<(String, i64, i128)> = minutes
        .iter()
        .map(|(user, m)| {
            let exact_num = cost * *m as i128;
            let floor = exact_num.div_euclid(total as i128);
            let rem = exact_num.rem_euclid(total as i128);
            (user.clone(), floor as i64, rem)
        })
        .collect();
    let assigned: i64 = floored.iter().map(|(_, f, _)| *f).sum();
    let mut leftover = provider_cost.micros() - assigned;
    floored.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    for entry in floored.iter_mut() {
        if leftover == 0 {
            break;
        }
        let step = if leftover > 0 { 1 } else { -1 };
        entry.1 += step;
        leftover -= step;
    }
    for (user, micros, _) in floored {
        shares.insert(user, Money::from_micros(micros));
    }
    shares
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, app: &str, unit: &str, node: &str, minutes: u64) -> UsageRecord {
        UsageRecord {
            user: user.into(),
            app_id: AppId::new(app),
            unit_id: UnitId::new(unit),
            node_id: NodeId::new(node),
            wall_minutes: minutes,
            started_ms: 0,
            ended_ms: minutes * 60_000,
        }
    }

    #[test]
    fn wall_minutes_round_up_with_minimum_one() {
        assert_eq!(wall_minutes(0, 59_000), 1);
        assert_eq!(wall_minutes(0, 60_000), 1);
        assert_eq!(wall_minutes(0, 61_000), 2);
        assert_eq!(wall_minutes(5, 5), 1);
    }

    #[test]
    fn duplicate_records_are_ignored() {
        let mut store = UsageStore::in_memory();
        let r = rec("a", "app-1", "t0000", "n1", 2);
        assert_eq!(store.record(r.clone()).unwrap(), RecordOutcome::Recorded);
        assert_eq!(store.record(r).unwrap(), RecordOutcome::Duplicate);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn ledger_round_trips_through_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        {
            let mut store = UsageStore::with_ledger(&path).unwrap();
            store.record(rec("a", "app-1", "t0000", "n1", 2)).unwrap();
            store.record(rec("b", "app-2", "t0000", "n2", 3)).unwrap();
        }
        let store = UsageStore::with_ledger(&path).unwrap();
        assert_eq!(store.len(), 2);
        // Replayed records keep idempotence.
        let mut store = store;
        assert_eq!(
            store.record(rec("a", "app-1", "t0000", "n1", 2)).unwrap(),
            RecordOutcome::Duplicate
        );
    }

    #[test]
    fn report_filters_and_aggregates() {
        let mut store = UsageStore::in_memory();
        store.record(rec("a", "app-1", "t0000", "n2", 2)).unwrap();
        store.record(rec("a", "app-1", "t0001", "n1", 3)).unwrap();
        store.record(rec("b", "app-2", "t0000", "n1", 5)).unwrap();

        let (all, agg) = store.report(&UsageFilter::default());
        assert_eq!(all.len(), 3);
        assert_eq!(agg.total_minutes, 10);
        // node-then-unit order.
        assert_eq!(all[0].node_id.as_str(), "n1");

        let (mine, agg) = store.report(&UsageFilter {
            user: Some("a".into()),
            ..Default::default()
        });
        assert_eq!(mine.len(), 2);
        assert_eq!(agg.per_app[&AppId::new("app-1")], 5);

        let (empty, agg) = UsageStore::in_memory().report(&UsageFilter::default());
        assert!(empty.is_empty());
        assert_eq!(agg.total_minutes, 0);
    }

    #[test]
    fn weighted_sum_prices_minutes() {
        let records = vec![
            rec("a", "app-1", "t0000", "n1", 2),
            rec("a", "app-1", "t0001", "n1", 2),
            rec("a", "app-1", "t0002", "n1", 2),
        ];
        let mut table = PriceTable::default();
        table.set("n1", Money::parse("0.05").unwrap());
        let invoices = price_weighted_sum(&records, &table, |_| None).unwrap();
        assert_eq!(invoices.len(), 1);
        assert_eq!(invoices[0].total, Money::parse("0.30").unwrap());
    }

    #[test]
    fn empty_records_invoice_nothing() {
        let invoices = price_weighted_sum(&[], &PriceTable::default(), |_| None).unwrap();
        assert!(invoices.is_empty());
    }

    #[test]
    fn unpriced_resource_is_an_error() {
        let records = vec![rec("a", "app-1", "t0000", "mystery", 1)];
        let err = price_weighted_sum(&records, &PriceTable::default(), |_| None).unwrap_err();
        assert!(matches!(err, AccountingError::UnpricedResource(_)));
    }

    #[test]
    fn instance_type_prices_apply_through_the_resolver() {
        let records = vec![rec("a", "app-1", "t0000", "i-007", 10)];
        let mut table = PriceTable::default();
        table.set("m1.small", Money::parse("0.01").unwrap());
        let invoices =
            price_weighted_sum(&records, &table, |_| Some("m1.small".to_string())).unwrap();
        assert_eq!(invoices[0].total, Money::parse("0.10").unwrap());
    }

    #[test]
    fn middleman_split_is_proportional() {
        let records = vec![
            rec("a", "app-1", "t0000", "n1", 30),
            rec("b", "app-2", "t0000", "n1", 10),
        ];
        let shares = price_middleman_share(&records, Money::parse("0.20").unwrap(), None);
        assert_eq!(shares["a"], Money::parse("0.15").unwrap());
        assert_eq!(shares["b"], Money::parse("0.05").unwrap());
    }

    #[test]
    fn single_user_takes_the_whole_bill() {
        let records = vec![rec("solo", "app-1", "t0000", "n1", 7)];
        let shares = price_middleman_share(&records, Money::parse("1.23").unwrap(), None);
        assert_eq!(shares.len(), 1);
        assert_eq!(shares["solo"], Money::parse("1.23").unwrap());
    }

    #[test]
    fn zero_usage_bills_the_platform_account() {
        let shares = price_middleman_share(&[], Money::parse("0.10").unwrap(), None);
        assert_eq!(shares[PLATFORM_ACCOUNT], Money::parse("0.10").unwrap());
    }

    #[test]
    fn shares_sum_exactly_even_with_awkward_ratios() {
        let records = vec![
            rec("a", "x", "u1", "n", 1),
            rec("b", "x", "u2", "n", 1),
            rec("c", "x", "u3", "n", 1),
        ];
        let cost = Money::from_micros(100);
        let shares = price_middleman_share(&records, cost, None);
        let sum: Money = shares.values().copied().sum();
        assert_eq!(sum, cost);
    }
}
