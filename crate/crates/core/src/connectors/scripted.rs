use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;

use super::{Connector, FetchOutcome, SourceDescriptor, Watermark};
use crate::domain::Timestamp;

/// Replays a fixed sequence of outcomes, one per call. Once the script runs
/// out every call succeeds with no records and the watermark unchanged.
#[derive(Debug, Default)]
pub struct ScriptedConnector {
    script: Mutex<VecDeque<FetchOutcome>>,
    calls: AtomicUsize,
}

impl ScriptedConnector {
    pub fn new(script: impl IntoIterator<Item = FetchOutcome>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn push(&self, outcome: FetchOutcome) {
        self.script.lock().push_back(outcome);
    }
}

impl Connector for ScriptedConnector {
    fn fetch(
        &self,
        _source: &SourceDescriptor,
        watermark: Option<&Watermark>,
        _now: Timestamp,
    ) -> FetchOutcome {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.script.lock().pop_front().unwrap_or_else(|| FetchOutcome::Success {
            records: Vec::new(),
            watermark: watermark
                .cloned()
                .unwrap_or(Watermark(serde_json::Value::Null)),
        })
    }
}
