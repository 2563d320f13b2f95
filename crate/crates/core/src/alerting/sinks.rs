use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::Serialize;
use thiserror::Error;

use super::Notification;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SinkError {
    #[error("sink {0:?} is not registered")]
    Unknown(String),
    #[error("delivery failed: {0}")]
    Delivery(String),
}

pub trait Sink: Send + Sync {
    fn deliver(&self, notification: &Notification) -> Result<(), SinkError>;
}

/// Prints one JSON line per notification to standard output.
#[derive(Debug, Default)]
pub struct StdoutSink;

impl Sink for StdoutSink {
    fn deliver(&self, notification: &Notification) -> Result<(), SinkError> {
        let mut out = std::io::stdout().lock();
        writeln!(out, "{}", notification.to_json()).map_err(|e| SinkError::Delivery(e.to_string()))
    }
}

/// Appends one JSON line per notification to a file.
#[derive(Debug)]
pub struct FileSink {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl Sink for FileSink {
    fn deliver(&self, notification: &Notification) -> Result<(), SinkError> {
        let _guard = self.lock.lock();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| SinkError::Delivery(format!("{}: {e}", self.path.display())))?;
        writeln!(f, "{}", notification.to_json()).map_err(|e| SinkError::Delivery(e.to_string()))
    }
}

/// POSTs the flat JSON body to a URL; any non-2xx status is a failure.
pub struct WebhookSink {
    url: String,
    agent: ureq::Agent,
}

impl WebhookSink {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
        }
    }
}

impl Sink for WebhookSink {
    fn deliver(&self, notification: &Notification) -> Result<(), SinkError> {
        let body = notification.to_json().to_string();
        let resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| SinkError::Delivery(e.to_string()))?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(SinkError::Delivery(format!("webhook answered {status}")))
        }
    }
}

/// Keeps notifications in memory. Can be told to fail the next deliveries.
#[derive(Debug, Default)]
pub struct MemorySink {
    received: Mutex<Vec<Notification>>,
    failures_left: Mutex<usize>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fail_next(&self, n: usize) {
        *self.failures_left.lock() = n;
    }

    pub fn received(&self) -> Vec<Notification> {
        self.received.lock().clone()
    }
}

impl Sink for MemorySink {
    fn deliver(&self, notification: &Notification) -> Result<(), SinkError> {
        let mut left = self.failures_left.lock();
        if *left > 0 {
            *left -= 1;
            return Err(SinkError::Delivery("injected failure".into()));
        }
        self.received.lock().push(notification.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DeliveryRecord {
    pub channel: String,
    pub summary: String,
    pub attempts: u32,
    pub error: Option<String>,
}

/// Named sinks plus a delivery log. Each delivery is retried once; failures
/// are recorded and never abort other deliveries.
#[derive(Default)]
pub struct Notifier {
    sinks: BTreeMap<String, Arc<dyn Sink>>,
    failure_channel: Option<String>,
    log: Mutex<Vec<DeliveryRecord>>,
}

impl Notifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sink(mut self, name: impl Into<String>, sink: Arc<dyn Sink>) -> Self {
        self.sinks.insert(name.into(), sink);
        self
    }

    /// Channel that receives scheduler failures and credential warnings.
    pub fn with_failure_channel(mut self, name: impl Into<String>) -> Self {
        self.failure_channel = Some(name.into());
        self
    }

    pub fn sink_names(&self) -> std::collections::BTreeSet<String> {
        self.sinks.keys().cloned().collect()
    }

    pub fn failure_channel(&self) -> Option<&str> {
        self.failure_channel.as_deref()
    }

    pub fn notify(&self, channel: &str, notification: &Notification) -> Result<(), SinkError> {
        let mut record = DeliveryRecord {
            channel: channel.to_string(),
            summary: notification.summary(),
            attempts: 0,
            error: None,
        };
        let result = match self.sinks.get(channel) {
            None => Err(SinkError::Unknown(channel.to_string())),
            Some(sink) => {
                record.attempts = 1;
                sink.deliver(notification).or_else(|e| {
                    log::warn!("delivery to {channel} failed ({e}), retrying once");
                    record.attempts = 2;
                    sink.deliver(notification)
                })
            }
        };
        if let Err(e) = &result {
            log::error!("notification to {channel} dropped: {e}");
            record.error = Some(e.to_string());
        }
        self.log.lock().push(record);
        result
    }

    /// Sends to the failure channel, if one is configured.
    pub fn notify_failure(&self, notification: &Notification) {
        match &self.failure_channel {
            Some(ch) => {
                let _ = self.notify(ch, notification);
            }
            None => log::warn!("{}", notification.summary()),
        }
    }

    pub fn deliveries(&self) -> Vec<DeliveryRecord> {
        self.log.lock().clone()
    }
}
