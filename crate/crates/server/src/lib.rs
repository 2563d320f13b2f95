//! HTTP surfaces of devpulse.
//!
//! * `POST /ingest/{source-id}` and `GET /ingest/health`: token-scoped push
//!   of canonical events into raw collections.
//! * `GET /metrics/{metric-id}`, `GET /metrics/{metric-id}/drilldown`,
//!   `GET /catalog`, `GET /boards`, `GET /alerts`: role-guarded reads over
//!   the processed store, with a TTL result cache on metric series.

pub mod cache;
pub mod error;
pub mod ingest;
pub mod query;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use parking_lot::RwLock;
use tower_http::cors::{AllowOrigin, CorsLayer};

use devpulse_core::access::{AccessPolicy, Principal, TokenTable};
use devpulse_core::alerting::AlertEvent;
use devpulse_core::config::Config;
use devpulse_core::metrics::catalog::Target;
use devpulse_core::{Clock, Engine, MetricId, Store};

pub use cache::{CacheEntry, QueryCache};
pub use error::ApiError;

pub const X_CACHE: &str = "x-cache";
pub const X_LAST_UPDATED: &str = "x-last-updated";

/// Alerts kept for `GET /alerts`; older ones are dropped first.
const ALERT_HISTORY: usize = 500;

#[derive(Debug, Clone)]
pub struct Settings {
    pub ttl: chrono::Duration,
    pub ttl_overrides: BTreeMap<MetricId, chrono::Duration>,
    pub max_body_bytes: usize,
    pub cors_origins: Vec<String>,
    pub targets: BTreeMap<MetricId, Target>,
    pub boards: serde_json::Value,
}

impl Settings {
    pub fn ttl_for(&self, metric: MetricId) -> chrono::Duration {
        self.ttl_overrides.get(&metric).copied().unwrap_or(self.ttl)
    }
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            ttl: chrono::Duration::seconds(300),
            ttl_overrides: BTreeMap::new(),
            max_body_bytes: 4 * 1024 * 1024,
            cors_origins: Vec::new(),
            targets: devpulse_core::metrics::catalog::default_targets(),
            boards: serde_json::Value::Null,
        }
    }
}

pub struct AppState {
    pub store: Arc<Store>,
    pub engine: Engine,
    pub tokens: TokenTable,
    pub access: AccessPolicy,
    pub clock: Arc<dyn Clock>,
    pub cache: QueryCache,
    pub settings: Settings,
    alerts: RwLock<Vec<AlertEvent>>,
}

impl AppState {
    pub fn new(
        store: Arc<Store>,
        engine: Engine,
        tokens: TokenTable,
        access: AccessPolicy,
        clock: Arc<dyn Clock>,
        settings: Settings,
    ) -> Self {
        Self {
            store,
            engine,
            tokens,
            access,
            clock,
            cache: QueryCache::new(),
            settings,
            alerts: RwLock::new(Vec::new()),
        }
    }

    pub fn from_config(cfg: &Config, store: Arc<Store>, clock: Arc<dyn Clock>) -> Self {
        let secs = |s: u64| chrono::Duration::seconds(s as i64);
        let settings = Settings {
            ttl: secs(cfg.query.ttl_secs),
            ttl_overrides: cfg.query.ttl_overrides.iter().map(|(m, s)| (*m, secs(*s))).collect(),
            max_body_bytes: cfg.ingest.max_body_bytes,
            cors_origins: cfg.query.cors_origins.clone(),
            targets: cfg.targets(),
            boards: cfg.boards.clone(),
        };
        Self::new(store, cfg.engine(), cfg.token_table(), cfg.access_policy(), clock, settings)
    }

    pub fn record_alerts(&self, events: impl IntoIterator<Item = AlertEvent>) {
        let mut alerts = self.alerts.write();
        alerts.extend(events);
        let excess = alerts.len().saturating_sub(ALERT_HISTORY);
        alerts.drain(..excess);
    }

    pub fn alerts(&self) -> Vec<AlertEvent> {
        self.alerts.read().clone()
    }

    pub(crate) fn principal(&self, headers: &HeaderMap) -> Result<&Principal, ApiError> {
        bearer(headers)
            .and_then(|secret| self.access.authenticate(secret))
            .ok_or(ApiError::Unauthorized)
    }
}

pub(crate) fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, secret) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| secret.trim()).filter(|s| !s.is_empty())
}

fn cors(origins: &[String]) -> CorsLayer {
    let origins: Vec<HeaderValue> = origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                log::warn!("ignoring invalid CORS origin {o:?}");
                None
            }
        })
        .collect();
    CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE])
        .expose_headers([HeaderName::from_static(X_CACHE), HeaderName::from_static(X_LAST_UPDATED)])
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = cors(&state.settings.cors_origins);
    Router::new()
        .route("/ingest/health", get(ingest::health))
        .route("/ingest/{source_id}", post(ingest::ingest))
        .route("/metrics/{metric_id}", get(query::series))
        .route("/metrics/{metric_id}/drilldown", get(query::drilldown))
        .route("/catalog", get(query::catalog))
        .route("/boards", get(query::boards))
        .route("/alerts", get(query::alerts))
        .layer(cors)
        .with_state(state)
}
