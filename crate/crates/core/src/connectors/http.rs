use std::time::Duration;

use super::{collect_new, Connector, EventCursor, FetchOutcome, SourceDescriptor, Watermark};
use crate::domain::{PlatformSet, Timestamp};

/// Used when a 429 response carries no usable `Retry-After`.
const DEFAULT_RETRY_AFTER: Duration = Duration::from_secs(60);

/// Pulls JSON lines from `GET {base-url}/{source-id}?after=<rfc3339>`.
///
/// Status handling: 2xx is parsed, 429 becomes `RateLimited` honouring
/// `Retry-After` (seconds), 401/403/404 and other 4xx are permanent, 5xx and
/// transport errors are transient.
pub struct HttpConnector {
    base_url: String,
    token: Option<String>,
    platforms: PlatformSet,
    agent: ureq::Agent,
}

impl HttpConnector {
    pub fn new(base_url: impl Into<String>, token: Option<String>, platforms: PlatformSet) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            platforms,
            agent,
        }
    }
}

fn retry_after(value: Option<&str>) -> Duration {
    value
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs)
        .unwrap_or(DEFAULT_RETRY_AFTER)
}

impl Connector for HttpConnector {
    fn fetch(
        &self,
        source: &SourceDescriptor,
        watermark: Option<&Watermark>,
        now: Timestamp,
    ) -> FetchOutcome {
        let cursor = EventCursor::from_watermark(watermark);
        let mut req = self.agent.get(format!("{}/{}", self.base_url, source.source_id));
        if let Some(after) = cursor.after {
            req = req.query("after", after.to_rfc3339());
        }
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = match req.call() {
            Ok(r) => r,
            Err(e) => return FetchOutcome::TransientFailure(e.to_string()),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            429 => {
                let header = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok());
                return FetchOutcome::RateLimited(retry_after(header));
            }
            401 | 403 => return FetchOutcome::PermanentFailure(format!("authorization rejected ({status})")),
            500..=599 => return FetchOutcome::TransientFailure(format!("server error {status}")),
            _ => return FetchOutcome::PermanentFailure(format!("unexpected status {status}")),
        }
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return FetchOutcome::TransientFailure(e.to_string()),
        };
        let lines = body.lines().map(str::to_string);
        let (records, next) = collect_new(&source.source_id, lines, &self.platforms, &cursor, now);
        FetchOutcome::Success {
            records,
            watermark: next.to_watermark(),
        }
    }
}
