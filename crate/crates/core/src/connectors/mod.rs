//! Source adapters.
//!
//! A connector turns one source into [`RawRecord`]s, newer than an opaque
//! per-source [`Watermark`]. Lines that do not decode as canonical events are
//! kept as opaque blobs keyed by their content hash.

mod fixture;
mod http;
mod scripted;

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cron::CronSchedule;
use crate::domain::{EngineeringEvent, PlatformSet, Timestamp};
use crate::storage::RawRecord;

pub use fixture::FixtureConnector;
pub use http::HttpConnector;
pub use scripted::ScriptedConnector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SourceDescriptor {
    pub source_id: String,
    pub schedule: CronSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_expiry: Option<Timestamp>,
}

/// Opaque per-source cursor. Only the connector that produced it interprets
/// its contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Watermark(pub serde_json::Value);

#[derive(Debug, Clone, PartialEq)]
pub enum FetchOutcome {
    Success {
        records: Vec<RawRecord>,
        watermark: Watermark,
    },
    TransientFailure(String),
    RateLimited(Duration),
    PermanentFailure(String),
}

impl FetchOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            FetchOutcome::Success { .. } => "success",
            FetchOutcome::TransientFailure(_) => "transient-failure",
            FetchOutcome::RateLimited(_) => "rate-limited",
            FetchOutcome::PermanentFailure(_) => "permanent-failure",
        }
    }
}

pub trait Connector: Send + Sync {
    fn fetch(
        &self,
        source: &SourceDescriptor,
        watermark: Option<&Watermark>,
        now: Timestamp,
    ) -> FetchOutcome;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExpiryWarning {
    pub source_id: String,
    pub expires_at: Timestamp,
}

/// A warning when the source's credential expires within `horizon` of `now`
/// (or already has).
pub fn check_credentials(
    source: &SourceDescriptor,
    now: Timestamp,
    horizon: chrono::Duration,
) -> Option<ExpiryWarning> {
    let expiry = source.credential_expiry?;
    (expiry - now <= horizon).then(|| ExpiryWarning {
        source_id: source.source_id.clone(),
        expires_at: expiry,
    })
}

/// Cursor used by the line-oriented connectors: the newest event time seen,
/// the natural keys observed at exactly that time, and the hashes of blobs
/// already delivered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EventCursor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub keys_at: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub blobs: BTreeSet<String>,
}

impl EventCursor {
    /// Unknown or malformed watermarks read as "from the beginning".
    pub fn from_watermark(w: Option<&Watermark>) -> Self {
        w.and_then(|w| serde_json::from_value(w.0.clone()).ok())
            .unwrap_or_default()
    }

    pub fn to_watermark(&self) -> Watermark {
        Watermark(serde_json::to_value(self).expect("cursor serializes"))
    }

    fn is_new_event(&self, time: Timestamp, key: &str) -> bool {
        match self.after {
            None => true,
            Some(after) => time > after || (time == after && !self.keys_at.contains(key)),
        }
    }

    fn observe_event(&mut self, time: Timestamp, key: &str) {
        match self.after {
            Some(after) if time < after => {}
            Some(after) if time == after => {
                self.keys_at.insert(key.to_string());
            }
            _ => {
                self.after = Some(time);
                self.keys_at = BTreeSet::from([key.to_string()]);
            }
        }
    }
}

pub(crate) fn blob_key(line: &str) -> String {
    format!("blob:{}", hex::encode(Sha256::digest(line.as_bytes())))
}

/// Decodes JSON lines into raw records newer than `cursor`, advancing it.
pub(crate) fn collect_new(
    source_id: &str,
    lines: impl IntoIterator<Item = String>,
    platforms: &PlatformSet,
    cursor: &EventCursor,
    now: Timestamp,
) -> (Vec<RawRecord>, EventCursor) {
    let mut next = cursor.clone();
    let mut records = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match EngineeringEvent::parse(line, platforms) {
            Ok(event) => {
                let key = event.natural_key();
                let time = event.event_time();
                if cursor.is_new_event(time, &key) {
                    records.push(RawRecord {
                        source_id: source_id.to_string(),
                        natural_key: key.clone(),
                        fetched_at: now,
                        payload: event.to_canonical_value(),
                    });
                }
                next.observe_event(time, &key);
            }
            Err(e) => {
                let key = blob_key(line);
                if next.blobs.insert(key.clone()) {
                    log::debug!("{source_id}: keeping unparseable line as blob ({e})");
                    records.push(RawRecord {
                        source_id: source_id.to_string(),
                        natural_key: key,
                        fetched_at: now,
                        payload: serde_json::Value::String(line.to_string()),
                    });
                }
            }
        }
    }
    (records, next)
}
