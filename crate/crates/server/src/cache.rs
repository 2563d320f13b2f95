//! Query-result cache with a fixed time-to-live.

use std::collections::HashMap;

use devpulse_core::domain::Timestamp;
use parking_lot::Mutex;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub body: String,
    pub last_updated: Option<Timestamp>,
    pub expires_at: Timestamp,
}

/// Entries keyed by request fingerprint. An entry is served only while
/// `now < expires-at`; concurrent fills simply overwrite each other.
#[derive(Debug, Default)]
pub struct QueryCache {
    entries: Mutex<HashMap<String, CacheEntry>>,
}

impl QueryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, fingerprint: &str, now: Timestamp) -> Option<CacheEntry> {
        let mut entries = self.entries.lock();
        match entries.get(fingerprint) {
            Some(e) if now < e.expires_at => Some(e.clone()),
            Some(_) => {
                entries.remove(fingerprint);
                None
            }
            None => None,
        }
    }

    pub fn put(&self, fingerprint: String, entry: CacheEntry) {
        self.entries.lock().insert(fingerprint, entry);
    }

    pub fn clear(&self) {
        self.entries.lock().clear();
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    #[test]
    fn entries_expire_at_ttl() {
        let t0 = Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap();
        let cache = QueryCache::new();
        cache.put(
            "k".into(),
            CacheEntry {
                body: "b".into(),
                last_updated: None,
                expires_at: t0 + Duration::seconds(2),
            },
        );
        assert!(cache.get("k", t0 + Duration::seconds(1)).is_some());
        assert!(cache.get("k", t0 + Duration::seconds(2)).is_none());
        assert!(cache.is_empty());
    }
}
