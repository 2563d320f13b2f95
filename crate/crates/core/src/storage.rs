//! Dual-namespace store.
//!
//! * `raw`: append-only, versioned records keyed by `(source-id, natural-key)`.
//! * `processed`: one [`MetricPoint`] per `(metric, scope, window)`.
//!
//! Both namespaces are held in memory and persisted as JSON-lines files in
//! the store directory (`raw.jsonl`, `processed.jsonl`). The raw file is only
//! ever appended to. The processed file is an upsert log that
//! [`Store::compact_processed`] rewrites in key order, which makes the file
//! itself a canonical dump of the namespace.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MetricId, MetricKind, Scope, TimeWindow, Timestamp, WindowGranularity};

const RAW_FILE: &str = "raw.jsonl";
const PROCESSED_FILE: &str = "processed.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt line {line} in {path}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid record: {0}")]
    Validation(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// As-fetched record. `payload` is a canonical event object, or a JSON
/// string holding an opaque blob that did not parse as an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RawRecord {
    pub source_id: String,
    pub natural_key: String,
    pub fetched_at: Timestamp,
    pub payload: serde_json::Value,
}

impl RawRecord {
    pub fn is_blob(&self) -> bool {
        self.payload.is_string()
    }
}

/// Counts of open bugs by priority, or any label→count breakdown.
pub type Distribution = BTreeMap<String, u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricValue {
    Number(f64),
    Distribution(Distribution),
    StatusTriple {
        to_be_automated: u64,
        automated: u64,
        cannot_automate: u64,
    },
}

impl MetricValue {
    pub fn kind(&self) -> MetricKind {
        match self {
            MetricValue::Number(_) => MetricKind::Number,
            MetricValue::Distribution(_) => MetricKind::Distribution,
            MetricValue::StatusTriple { .. } => MetricKind::StatusTriple,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            MetricValue::Number(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricPoint {
    pub metric_id: MetricId,
    pub scope: Scope,
    pub window: TimeWindow,
    pub value: MetricValue,
    pub computed_at: Timestamp,
    pub sample_size: u64,
    /// Companion figures reported alongside the headline value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

impl MetricPoint {
    pub fn key(&self) -> PointKey {
        PointKey {
            metric_id: self.metric_id,
            scope: self.scope.clone(),
            granularity: self.window.granularity(),
            start: self.window.start(),
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.value.kind() != self.metric_id.kind() {
            return Err(StoreError::Validation(format!(
                "{} expects a {:?} value, got {:?}",
                self.metric_id,
                self.metric_id.kind(),
                self.value.kind()
            )));
        }
        if let MetricValue::Number(v) = self.value {
            if !v.is_finite() {
                return Err(StoreError::Validation(format!(
                    "{} value {v} is not finite",
                    self.metric_id
                )));
            }
            if self.metric_id.is_percent() && !(0.0..=100.0).contains(&v) {
                return Err(StoreError::Validation(format!(
                    "{} percentage {v} outside [0, 100]",
                    self.metric_id
                )));
            }
            if v < 0.0 {
                return Err(StoreError::Validation(format!(
                    "{} value {v} is negative",
                    self.metric_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey {
    pub metric_id: MetricId,
    pub scope: Scope,
    pub granularity: WindowGranularity,
    pub start: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FreshnessStamp {
    pub metric_id: MetricId,
    pub scope: Scope,
    pub last_updated: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    /// First version for this key.
    Inserted,
    /// A differing payload for an existing key; stored as a new version.
    NewVersion,
    /// Identical to the latest version; nothing written.
    Unchanged,
}

impl AppendOutcome {
    pub fn stored(self) -> bool {
        self != AppendOutcome::Unchanged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Inserted,
    Replaced,
    Unchanged,
}

/// Range selector for [`Store::read_raw`].
#[derive(Debug, Clone, Default)]
pub enum RawRange {
    #[default]
    All,
    /// Natural keys in `[from, to)`.
    Keys { from: String, to: String },
    /// Latest versions whose `fetched-at` lies in `[from, to)`.
    FetchedAt { from: Timestamp, to: Timestamp },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Raw,
    Processed,
}

type RawKey = (String, String);

#[derive(Default)]
struct State {
    raw: BTreeMap<RawKey, Vec<RawRecord>>,
    raw_versions: usize,
    processed: BTreeMap<PointKey, MetricPoint>,
}

/// Thread-safe dual-namespace store. See the module docs.
pub struct Store {
    dir: Option<PathBuf>,
    state: RwLock<State>,
}

/// Immutable copy of the raw namespace taken at one instant.
#[derive(Debug, Clone, Default)]
pub struct RawSnapshot {
    /// Every stored version, grouped by key, oldest version first.
    pub versions: Vec<Vec<RawRecord>>,
}

impl RawSnapshot {
    pub fn latest(&self) -> impl Iterator<Item = &RawRecord> {
        self.versions.iter().filter_map(|v| v.last())
    }

    pub fn all_versions(&self) -> impl Iterator<Item = &RawRecord> {
        self.versions.iter().flatten()
    }

    /// Newest `fetched-at` across the snapshot.
    pub fn high_water_mark(&self) -> Option<Timestamp> {
        self.all_versions().map(|r| r.fetched_at).max()
    }
}

impl Store {
    /// Volatile store, nothing touches disk.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            state: RwLock::new(State::default()),
        }
    }

    /// Opens (creating if needed) a store rooted at `dir`, replaying both logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut state = State::default();
        let raw_path = dir.join(RAW_FILE);
        for_each_line(&raw_path, |line, n| {
            let rec: RawRecord = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: raw_path.clone(),
                line: n,
                reason: e.to_string(),
            })?;
            state
                .raw
                .entry((rec.source_id.clone(), rec.natural_key.clone()))
                .or_default()
                .push(rec);
            state.raw_versions += 1;
            Ok(())
        })?;
        let processed_path = dir.join(PROCESSED_FILE);
        for_each_line(&processed_path, |line, n| {
            let p: MetricPoint = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: processed_path.clone(),
                line: n,
                reason: e.to_string(),
            })?;
            state.processed.insert(p.key(), p);
            Ok(())
        })?;
        Ok(Self {
            dir: Some(dir),
            state: RwLock::new(state),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn append_line(&self, file: &str, line: &str) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(file);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(f, "{line}").map_err(io_err(&path))?;
        Ok(())
    }

    /// Stores a raw record. Re-appending a payload identical to the latest
    /// version is a no-op; a changed payload becomes a new version.
    pub fn append_raw(&self, record: RawRecord) -> Result<AppendOutcome, StoreError> {
        if record.source_id.trim().is_empty() {
            return Err(StoreError::Validation("source-id is empty".into()));
        }
        if record.natural_key.trim().is_empty() {
            return Err(StoreError::Validation("natural-key is empty".into()));
        }
        let mut state = self.state.write();
        let key = (record.source_id.clone(), record.natural_key.clone());
        let outcome = match state.raw.get(&key).and_then(|v| v.last()) {
            Some(latest) if latest.payload == record.payload => return Ok(AppendOutcome::Unchanged),
            Some(_) => AppendOutcome::NewVersion,
            None => AppendOutcome::Inserted,
        };
        let line = serde_json::to_string(&record).expect("raw records serialize");
        self.append_line(RAW_FILE, &line)?;
        state.raw.entry(key).or_default().push(record);
        state.raw_versions += 1;
        Ok(outcome)
    }

    /// Latest version of each record of `source_id` within `range`.
    pub fn read_raw(&self, source_id: &str, range: &RawRange) -> Vec<RawRecord> {
        let state = self.state.read();
        let lo = (source_id.to_string(), String::new());
        state
            .raw
            .range(lo..)
            .take_while(|((s, _), _)| s == source_id)
            .filter_map(|((_, key), versions)| {
                let latest = versions.last()?;
                let keep = match range {
                    RawRange::All => true,
                    RawRange::Keys { from, to } => key >= from && key < to,
                    RawRange::FetchedAt { from, to } => {
                        latest.fetched_at >= *from && latest.fetched_at < *to
                    }
                };
                keep.then(|| latest.clone())
            })
            .collect()
    }

    /// Every version of one key, oldest first.
    pub fn raw_versions(&self, source_id: &str, natural_key: &str) -> Vec<RawRecord> {
        self.state
            .read()
            .raw
            .get(&(source_id.to_string(), natural_key.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    pub fn raw_sources(&self) -> Vec<String> {
        let state = self.state.read();
        let mut out: Vec<String> = state.raw.keys().map(|(s, _)| s.clone()).collect();
        out.dedup();
        out
    }

    /// Total stored versions across all keys.
    pub fn raw_len(&self) -> usize {
        self.state.read().raw_versions
    }

    pub fn snapshot_raw(&self) -> RawSnapshot {
        RawSnapshot {
            versions: self.state.read().raw.values().cloned().collect(),
        }
    }

    /// Replaces the point with the same `(metric, scope, window)`.
    pub fn upsert_metric(&self, point: MetricPoint) -> Result<UpsertOutcome, StoreError> {
        point.validate()?;
        let mut state = self.state.write();
        let key = point.key();
        let outcome = match state.processed.get(&key) {
            Some(existing) if *existing == point => return Ok(UpsertOutcome::Unchanged),
            Some(_) => UpsertOutcome::Replaced,
            None => UpsertOutcome::Inserted,
        };
        let line = serde_json::to_string(&point).expect("points serialize");
        self.append_line(PROCESSED_FILE, &line)?;
        state.processed.insert(key, point);
        Ok(outcome)
    }

    pub fn get_metric(
        &self,
        metric_id: MetricId,
        scope: &Scope,
        window: &TimeWindow,
    ) -> Option<MetricPoint> {
        let key = PointKey {
            metric_id,
            scope: scope.clone(),
            granularity: window.granularity(),
            start: window.start(),
        };
        self.state.read().processed.get(&key).cloned()
    }

    /// Points whose window starts in `[from, to)`, ordered by window start.
    /// Windows with no point are simply absent.
    pub fn query_metric(
        &self,
        metric_id: MetricId,
        scope: &Scope,
        from: Timestamp,
        to: Timestamp,
        granularity: WindowGranularity,
    ) -> Vec<MetricPoint> {
        if from >= to {
            return Vec::new();
        }
        let key = |start| PointKey {
            metric_id,
            scope: scope.clone(),
            granularity,
            start,
        };
        self.state
            .read()
            .processed
            .range((Bound::Included(key(from)), Bound::Excluded(key(to))))
            .map(|(_, p)| p.clone())
            .collect()
    }

    /// Most recent `computed-at` over all points of `(metric, scope)`.
    pub fn freshness(&self, metric_id: MetricId, scope: &Scope) -> Option<FreshnessStamp> {
        let state = self.state.read();
        WindowGranularity::ALL
            .iter()
            .flat_map(|&g| {
                let lo = PointKey {
                    metric_id,
                    scope: scope.clone(),
                    granularity: g,
                    start: Timestamp::MIN_UTC,
                };
                let hi = PointKey {
                    start: Timestamp::MAX_UTC,
                    ..lo.clone()
                };
                state
                    .processed
                    .range(lo..=hi)
                    .map(|(_, p)| p.computed_at)
                    .collect::<Vec<_>>()
            })
            .max()
            .map(|last_updated| FreshnessStamp {
                metric_id,
                scope: scope.clone(),
                last_updated,
            })
    }

    pub fn processed_len(&self) -> usize {
        self.state.read().processed.len()
    }

    pub fn all_points(&self) -> Vec<MetricPoint> {
        self.state.read().processed.values().cloned().collect()
    }

    /// Drops the whole processed namespace (memory and disk). The raw
    /// namespace is untouched, so everything can be recomputed from it.
    pub fn clear_processed(&self) -> Result<(), StoreError> {
        let mut state = self.state.write();
        if let Some(dir) = &self.dir {
            let path = dir.join(PROCESSED_FILE);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        state.processed.clear();
        Ok(())
    }

    /// Rewrites `processed.jsonl` as a key-ordered dump of live points.
    pub fn compact_processed(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let state = self.state.write();
        let path = dir.join(PROCESSED_FILE);
        let tmp = dir.join(format!("{PROCESSED_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            for p in state.processed.values() {
                let line = serde_json::to_string(p).expect("points serialize");
                writeln!(f, "{line}").map_err(io_err(&tmp))?;
            }
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }

    /// Writes one namespace as JSON lines: raw records in key order (all
    /// versions), or points in key order.
    pub fn export(&self, namespace: Namespace, out: &mut dyn Write) -> io::Result<()> {
        let state = self.state.read();
        match namespace {
            Namespace::Raw => {
                for rec in state.raw.values().flatten() {
                    writeln!(out, "{}", serde_json::to_string(rec).expect("serialize"))?;
                }
            }
            Namespace::Processed => {
                for p in state.processed.values() {
                    writeln!(out, "{}", serde_json::to_string(p).expect("serialize"))?;
                }
            }
        }
        Ok(())
    }

    pub fn export_string(&self, namespace: Namespace) -> String {
        let mut buf = Vec::new();
        self.export(namespace, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Checks that the backing directory accepts writes.
    pub fn probe_writable(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let probe = dir.join(".probe");
        fs::write(&probe, b"ok").map_err(io_err(&probe))?;
        fs::remove_file(&probe).map_err(io_err(&probe))?;
        Ok(())
    }
}

fn for_each_line(
    path: &Path,
    mut f: impl FnMut(&str, usize) -> Result<(), StoreError>,
) -> Result<(), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(path)(e)),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        f(&line, i + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::window_for;
    use serde_json::json;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn raw(key: &str, payload: serde_json::Value, at: &str) -> RawRecord {
        RawRecord {
            source_id: "git".into(),
            natural_key: key.into(),
            fetched_at: ts(at),
            payload,
        }
    }

    fn point(metric: MetricId, day: &str, value: MetricValue, at: &str) -> MetricPoint {
        MetricPoint {
            metric_id: metric,
            scope: "android".parse().unwrap(),
            window: window_for(ts(day), WindowGranularity::Daily),
            value,
            computed_at: ts(at),
            sample_size: 1,
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn append_is_idempotent_on_identical_payload() {
        let store = Store::in_memory();
        let r = raw("k1", json!({"a": 1}), "2024-03-04T00:00:00Z");
        assert_eq!(store.append_raw(r.clone()).unwrap(), AppendOutcome::Inserted);
        let mut again = r.clone();
        again.fetched_at = ts("2024-03-05T00:00:00Z");
        assert_eq!(store.append_raw(again).unwrap(), AppendOutcome::Unchanged);
        assert_eq!(store.raw_len(), 1);
    }

    #[test]
    fn changed_payload_is_a_new_version_and_latest_wins() {
        let store = Store::in_memory();
        store
            .append_raw(raw("k1", json!({"a": 1}), "2024-03-04T00:00:00Z"))
            .unwrap();
        let out = store
            .append_raw(raw("k1", json!({"a": 2}), "2024-03-05T00:00:00Z"))
            .unwrap();
        assert_eq!(out, AppendOutcome::NewVersion);
        assert_eq!(store.raw_versions("git", "k1").len(), 2);
        let read = store.read_raw("git", &RawRange::All);
        assert_eq!(read.len(), 1);
        assert_eq!(read[0].payload, json!({"a": 2}));
    }

    #[test]
    fn empty_key_rejected() {
        let store = Store::in_memory();
        assert!(matches!(
            store.append_raw(raw("", json!({}), "2024-03-04T00:00:00Z")),
            Err(StoreError::Validation(_))
        ));
    }

    #[test]
    fn read_raw_ranges() {
        let store = Store::in_memory();
        for (i, day) in ["04", "05", "06"].iter().enumerate() {
            store
                .append_raw(raw(
                    &format!("k{i}"),
                    json!(i),
                    &format!("2024-03-{day}T00:00:00Z"),
                ))
                .unwrap();
        }
        assert_eq!(store.read_raw("git", &RawRange::All).len(), 3);
        assert_eq!(store.read_raw("jira", &RawRange::All).len(), 0);
        let none = RawRange::FetchedAt {
            from: ts("2025-01-01T00:00:00Z"),
            to: ts("2025-02-01T00:00:00Z"),
        };
        assert!(store.read_raw("git", &none).is_empty());
        let keys = RawRange::Keys {
            from: "k1".into(),
            to: "k9".into(),
        };
        assert_eq!(store.read_raw("git", &keys).len(), 2);
    }

    #[test]
    fn upsert_round_trip_and_last_write_wins() {
        let store = Store::in_memory();
        let p = point(
            MetricId::MainFailRate,
            "2024-03-04T00:00:00Z",
            MetricValue::Number(4.0),
            "2024-03-05T00:00:00Z",
        );
        store.upsert_metric(p.clone()).unwrap();
        let scope = p.scope.clone();
        assert_eq!(store.get_metric(p.metric_id, &scope, &p.window), Some(p.clone()));

        let mut p2 = p.clone();
        p2.value = MetricValue::Number(5.0);
        p2.computed_at = ts("2024-03-06T00:00:00Z");
        assert_eq!(store.upsert_metric(p2.clone()).unwrap(), UpsertOutcome::Replaced);
        assert_eq!(store.get_metric(p.metric_id, &scope, &p.window), Some(p2));
        assert_eq!(
            store.freshness(p.metric_id, &scope).unwrap().last_updated,
            ts("2024-03-06T00:00:00Z")
        );
    }

    #[test]
    fn kind_mismatch_rejected() {
        let store = Store::in_memory();
        let p = point(
            MetricId::BugMix,
            "2024-03-04T00:00:00Z",
            MetricValue::Number(1.0),
            "2024-03-05T00:00:00Z",
        );
        assert!(matches!(store.upsert_metric(p), Err(StoreError::Validation(_))));
        let p = point(
            MetricId::MainFailRate,
            "2024-03-04T00:00:00Z",
            MetricValue::Number(120.0),
            "2024-03-05T00:00:00Z",
        );
        assert!(store.upsert_metric(p).is_err());
    }

    #[test]
    fn query_orders_and_skips_gaps() {
        let store = Store::in_memory();
        let scope: Scope = "android".parse().unwrap();
        assert!(store
            .query_metric(
                MetricId::MainFailRate,
                &scope,
                ts("2024-01-01T00:00:00Z"),
                ts("2025-01-01T00:00:00Z"),
                WindowGranularity::Weekly
            )
            .is_empty());
        for day in ["2024-03-18", "2024-03-04", "2024-03-11"] {
            let mut p = point(
                MetricId::MainFailRate,
                &format!("{day}T00:00:00Z"),
                MetricValue::Number(4.0),
                "2024-04-01T00:00:00Z",
            );
            p.window = window_for(p.window.start(), WindowGranularity::Weekly);
            store.upsert_metric(p).unwrap();
        }
        let q = store.query_metric(
            MetricId::MainFailRate,
            &scope,
            ts("2024-03-04T00:00:00Z"),
            ts("2024-03-25T00:00:00Z"),
            WindowGranularity::Weekly,
        );
        let starts: Vec<_> = q.iter().map(|p| p.window.start()).collect();
        assert_eq!(
            starts,
            [
                ts("2024-03-04T00:00:00Z"),
                ts("2024-03-11T00:00:00Z"),
                ts("2024-03-18T00:00:00Z")
            ]
        );
        assert!(store
            .query_metric(
                MetricId::MainFailRate,
                &scope,
                ts("2024-05-01T00:00:00Z"),
                ts("2024-06-01T00:00:00Z"),
                WindowGranularity::Weekly
            )
            .is_empty());
    }

    #[test]
    fn persists_and_reopens() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path()).unwrap();
            store
                .append_raw(raw("k1", json!({"a": 1}), "2024-03-04T00:00:00Z"))
                .unwrap();
            store
                .append_raw(raw("k1", json!({"a": 2}), "2024-03-05T00:00:00Z"))
                .unwrap();
            store
                .upsert_metric(point(
                    MetricId::MainFailRate,
                    "2024-03-04T00:00:00Z",
                    MetricValue::Number(4.0),
                    "2024-03-05T00:00:00Z",
                ))
                .unwrap();
            store.compact_processed().unwrap();
        }
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.raw_len(), 2);
        assert_eq!(store.processed_len(), 1);
        store.clear_processed().unwrap();
        assert_eq!(store.processed_len(), 0);
        assert_eq!(Store::open(dir.path()).unwrap().processed_len(), 0);
    }
}
