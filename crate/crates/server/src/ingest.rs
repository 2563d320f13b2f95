//! Token-scoped push of canonical events into raw collections.
//!
//! Batches are validated line by line: valid events are appended, invalid
//! ones are reported with their 1-based line number and never stored.

use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use devpulse_core::domain::SCHEMA_VERSION;
use devpulse_core::{EngineeringEvent, RawRecord};

use crate::{bearer, ApiError, AppState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub errors: Vec<LineError>,
    /// Accepted records that were new or changed; replays store nothing.
    pub stored: usize,
}

pub async fn ingest(
    State(state): State<Arc<AppState>>,
    Path(source_id): Path<String>,
    headers: HeaderMap,
    body: Body,
) -> Result<Response, ApiError> {
    let token = bearer(&headers)
        .and_then(|secret| state.tokens.authenticate(secret))
        .ok_or(ApiError::Unauthorized)?;
    if !token.allows(&source_id) {
        return Err(ApiError::Forbidden(format!(
            "token {} may not write to {source_id:?}",
            token.token_id
        )));
    }
    let limit = state.settings.max_body_bytes;
    let bytes = axum::body::to_bytes(body, limit).await.map_err(|e| {
        let mut source: Option<&(dyn std::error::Error + 'static)> = Some(&e);
        while let Some(err) = source {
            if err.is::<http_body_util::LengthLimitError>() {
                return ApiError::PayloadTooLarge(limit);
            }
            source = err.source();
        }
        ApiError::BadRequest(format!("unreadable body: {e}"))
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|_| ApiError::BadRequest("body is not UTF-8".into()))?;
    if text.lines().all(|l| l.trim().is_empty()) {
        return Err(ApiError::BadRequest("empty batch".into()));
    }

    let report = ingest_lines(&state, &source_id, text);
    log::info!(
        "ingest {source_id} by {}: accepted {}, rejected {}, stored {}",
        token.principal,
        report.accepted,
        report.rejected,
        report.stored
    );
    let status = if report.accepted == 0 {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::OK
    };
    Ok((status, Json(report)).into_response())
}

fn ingest_lines(state: &AppState, source_id: &str, text: &str) -> IngestReport {
    let platforms = state.engine.platforms();
    let now = state.clock.now();
    let mut report = IngestReport {
        accepted: 0,
        rejected: 0,
        errors: Vec::new(),
        stored: 0,
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let event = match EngineeringEvent::parse(line, platforms) {
            Ok(e) => e,
            Err(e) => {
                report.rejected += 1;
                report.errors.push(LineError {
                    line: i + 1,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let record = RawRecord {
            source_id: source_id.to_string(),
            natural_key: event.natural_key(),
            fetched_at: now,
            payload: event.to_canonical_value(),
        };
        match state.store.append_raw(record) {
            Ok(outcome) => {
                report.accepted += 1;
                report.stored += usize::from(outcome.stored());
            }
            Err(e) => {
                log::error!("ingest {source_id}: store append failed: {e}");
                report.rejected += 1;
                report.errors.push(LineError {
                    line: i + 1,
                    reason: format!("store error: {e}"),
                });
            }
        }
    }
    report
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Health {
    status: &'static str,
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.store.probe_writable() {
        Ok(()) => Json(Health {
            status: "ok",
            schema_version: SCHEMA_VERSION,
            error: None,
        })
        .into_response(),
        Err(e) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(Health {
                status: "unavailable",
                schema_version: SCHEMA_VERSION,
                error: Some(e.to_string()),
            }),
        )
            .into_response(),
    }
}
