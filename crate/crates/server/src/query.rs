//! Role-guarded read endpoints.
//!
//! Checks run in a fixed order: authentication (401), metric lookup (404),
//! parameter parsing (400), authorization (403). The metric-series cache is
//! consulted only after authorization, so its key omits the principal.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{NaiveDate, SecondsFormat};
use serde::Serialize;
use serde_json::Value;

use devpulse_core::metrics::catalog;
use devpulse_core::metrics::EventSet;
use devpulse_core::{
    MetricId, MetricKind, MetricPoint, MetricValue, Scope, TimeWindow, Timestamp, WindowGranularity,
};
use devpulse_core::domain::window_for;

use crate::{ApiError, AppState, CacheEntry, X_CACHE, X_LAST_UPDATED};

type Params = Query<HashMap<String, String>>;

fn metric(id: &str) -> Result<MetricId, ApiError> {
    MetricId::from_str(id).map_err(|_| ApiError::NotFound(format!("unknown metric {id:?}")))
}

fn scope_param(params: &HashMap<String, String>) -> Result<Scope, ApiError> {
    match params.get("scope") {
        None => Ok(Scope::Org),
        Some(s) => Scope::from_str(s).map_err(|e| ApiError::BadRequest(format!("scope: {e}"))),
    }
}

/// RFC 3339 instant or a bare `YYYY-MM-DD` (midnight UTC).
pub fn parse_instant(s: &str) -> Option<Timestamp> {
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&chrono::Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|d| d.and_utc())
}

fn instant_param(params: &HashMap<String, String>, name: &str) -> Result<Option<Timestamp>, ApiError> {
    params
        .get(name)
        .map(|s| parse_instant(s).ok_or_else(|| ApiError::BadRequest(format!("{name}: invalid instant {s:?}"))))
        .transpose()
}

/// `granularity:instant`, e.g. `daily:2024-03-09`; the window containing
/// the instant is chosen.
pub fn parse_window(s: &str) -> Option<TimeWindow> {
    let (g, at) = s.split_once(':')?;
    let g = WindowGranularity::from_str(g).ok()?;
    Some(window_for(parse_instant(at)?, g))
}

fn rfc3339(t: Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Metric value as plain JSON: a number, a label→count map, or the
/// automation-status triple.
fn value_json(v: &MetricValue) -> Value {
    match v {
        MetricValue::Number(n) => serde_json::json!(n),
        MetricValue::Distribution(d) => serde_json::json!(d),
        MetricValue::StatusTriple {
            to_be_automated,
            automated,
            cannot_automate,
        } => serde_json::json!({
            "to-be-automated": to_be_automated,
            "automated": automated,
            "cannot-automate": cannot_automate,
        }),
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct PointDoc {
    window_start: Timestamp,
    window_end: Timestamp,
    value: Value,
    sample_size: u64,
    computed_at: Timestamp,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    extras: BTreeMap<String, f64>,
}

impl From<&MetricPoint> for PointDoc {
    fn from(p: &MetricPoint) -> Self {
        Self {
            window_start: p.window.start(),
            window_end: p.window.end(),
            value: value_json(&p.value),
            sample_size: p.sample_size,
            computed_at: p.computed_at,
            extras: p.extras.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SeriesDoc {
    metric_id: MetricId,
    unit: &'static str,
    kind: MetricKind,
    scope: String,
    granularity: WindowGranularity,
    last_updated: Option<Timestamp>,
    points: Vec<PointDoc>,
}

fn cached_response(entry: &CacheEntry, hit: bool) -> Response {
    let mut resp = (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        entry.body.clone(),
    )
        .into_response();
    let h = resp.headers_mut();
    h.insert(X_CACHE, HeaderValue::from_static(if hit { "hit" } else { "miss" }));
    if let Some(t) = entry.last_updated {
        h.insert(X_LAST_UPDATED, HeaderValue::from_str(&rfc3339(t)).expect("ASCII timestamp"));
    }
    resp
}

pub async fn series(
    State(state): State<Arc<AppState>>,
    Path(metric_id): Path<String>,
    Query(params): Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let principal = state.principal(&headers)?;
    let metric = metric(&metric_id)?;
    let scope = scope_param(&params)?;
    let granularity = match params.get("granularity") {
        None => WindowGranularity::Daily,
        Some(g) => WindowGranularity::from_str(g).map_err(|e| ApiError::BadRequest(format!("granularity: {e}")))?,
    };
    let from = instant_param(&params, "from")?;
    let to = instant_param(&params, "to")?;
    if let (Some(f), Some(t)) = (from, to) {
        if f >= t {
            return Err(ApiError::BadRequest("from must be before to".into()));
        }
    }
    if !state.access.can_read(principal, metric, &scope) {
        return Err(ApiError::Forbidden(format!("{} may not read {metric} at {scope}", principal.name)));
    }

    let fingerprint = format!(
        "{metric}|{scope}|{granularity}|{}|{}",
        from.map(rfc3339).unwrap_or_default(),
        to.map(rfc3339).unwrap_or_default()
    );
    let now = state.clock.now();
    if let Some(entry) = state.cache.get(&fingerprint, now) {
        return Ok(cached_response(&entry, true));
    }

    let points = state.store.query_metric(
        metric,
        &scope,
        from.unwrap_or(Timestamp::MIN_UTC),
        to.unwrap_or(Timestamp::MAX_UTC),
        granularity,
    );
    let last_updated = state.store.freshness(metric, &scope).map(|f| f.last_updated);
    let doc = SeriesDoc {
        metric_id: metric,
        unit: metric.unit(),
        kind: metric.kind(),
        scope: scope.to_string(),
        granularity,
        last_updated,
        points: points.iter().map(PointDoc::from).collect(),
    };
    let entry = CacheEntry {
        body: serde_json::to_string(&doc).expect("documents serialize"),
        last_updated,
        expires_at: now + state.settings.ttl_for(metric),
    };
    state.cache.put(fingerprint, entry.clone());
    Ok(cached_response(&entry, false))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct DrilldownRecord {
    source_id: String,
    natural_key: String,
    version: usize,
    flagged: bool,
    fetched_at: Timestamp,
    payload: Value,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct DrilldownDoc {
    metric_id: MetricId,
    scope: String,
    window: String,
    window_start: Timestamp,
    window_end: Timestamp,
    point: PointDoc,
    records: Vec<DrilldownRecord>,
}

pub async fn drilldown(
    State(state): State<Arc<AppState>>,
    Path(metric_id): Path<String>,
    Query(params): Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let principal = state.principal(&headers)?;
    let metric = metric(&metric_id)?;
    let scope = scope_param(&params)?;
    let window = params
        .get("window")
        .ok_or_else(|| ApiError::BadRequest("window is required, e.g. daily:2024-03-09".into()))
        .and_then(|w| parse_window(w).ok_or_else(|| ApiError::BadRequest(format!("window: cannot parse {w:?}"))))?;
    let only_flagged = match params.get("only").map(String::as_str) {
        None | Some("all") => false,
        Some("flagged") => true,
        Some(other) => return Err(ApiError::BadRequest(format!("only: expected flagged or all, got {other:?}"))),
    };
    if !state.access.can_drilldown(principal, metric, &scope) {
        return Err(ApiError::Forbidden(format!(
            "{} may not drill into {metric} at {scope}",
            principal.name
        )));
    }
    let point = state
        .store
        .get_metric(metric, &scope, &window)
        .ok_or_else(|| ApiError::NotFound(format!("no {metric} point for {scope} in {}", window.key())))?;

    let events = EventSet::from_snapshot(&state.store.snapshot_raw(), state.engine.platforms());
    let records = state
        .engine
        .contributors(metric, &events, &scope, &window)
        .into_iter()
        .filter(|c| c.flagged || !only_flagged)
        .filter_map(|c| {
            let versions = state.store.raw_versions(&c.origin.source_id, &c.origin.natural_key);
            let raw = versions.into_iter().nth(c.origin.version)?;
            Some(DrilldownRecord {
                source_id: c.origin.source_id,
                natural_key: c.origin.natural_key,
                version: c.origin.version,
                flagged: c.flagged,
                fetched_at: raw.fetched_at,
                payload: raw.payload,
            })
        })
        .collect();
    Ok(Json(DrilldownDoc {
        metric_id: metric,
        scope: scope.to_string(),
        window: window.key(),
        window_start: window.start(),
        window_end: window.end(),
        point: PointDoc::from(&point),
        records,
    })
    .into_response())
}

pub async fn catalog(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    let principal = state.principal(&headers)?;
    let doc = catalog::document(&state.settings.targets, |m| state.access.can_see_metric(principal, m));
    Ok(Json(doc).into_response())
}

pub async fn boards(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    state.principal(&headers)?;
    Ok(Json(state.settings.boards.clone()).into_response())
}

/// Recent alert events the principal could read the underlying point of.
pub async fn alerts(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    let principal = state.principal(&headers)?;
    let visible: Vec<_> = state
        .alerts()
        .into_iter()
        .filter(|a| state.access.can_read(principal, a.point.metric_id, &a.point.scope))
        .collect();
    Ok(Json(visible).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn window_and_instant_parsing() {
        let w = parse_window("daily:2024-03-09").unwrap();
        assert_eq!(w.start(), Utc.with_ymd_and_hms(2024, 3, 9, 0, 0, 0).unwrap());
        assert_eq!(w.granularity(), WindowGranularity::Daily);
        let wk = parse_window("weekly:2024-03-09T12:00:00Z").unwrap();
        assert_eq!(wk.start(), Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap());
        assert!(parse_window("hourly:2024-03-09").is_none());
        assert!(parse_window("2024-03-09").is_none());
        assert!(parse_instant("yesterday").is_none());
        assert_eq!(
            parse_instant("2024-03-09T01:00:00+01:00"),
            Some(Utc.with_ymd_and_hms(2024, 3, 9, 0, 0, 0).unwrap())
        );
    }
}
