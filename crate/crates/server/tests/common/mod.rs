#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use tower::ServiceExt;

use devpulse_core::access::{AccessPolicy, ApiToken, Principal, Role, SecretHash, TokenTable};
use devpulse_core::{Engine, EngineConfig, ManualClock, PlatformSet, Store, Timestamp};
use devpulse_server::{router, AppState, Settings};

pub const ADMIN: &str = "admin-secret";
pub const VIEWER: &str = "viewer-secret";
pub const INGEST: &str = "ingest-secret";

pub fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2024, 6, 1, 12, 0, 0).unwrap()
}

pub fn role(json: serde_json::Value) -> Role {
    serde_json::from_value(json).unwrap()
}

pub fn principal(name: &str, roles: &[&str], secret: &str) -> Principal {
    let h = SecretHash::new(&format!("salt-{name}"), secret);
    Principal {
        name: name.into(),
        roles: roles.iter().map(|r| r.to_string()).collect(),
        salt: h.salt,
        token_sha256: h.secret_sha256,
    }
}

pub fn standard_policy() -> AccessPolicy {
    AccessPolicy::new(
        vec![
            role(serde_json::json!({
                "name": "admin", "readable-metrics": "*", "readable-scopes": ["*"], "raw-drilldown": true
            })),
            role(serde_json::json!({
                "name": "viewer", "readable-metrics": ["pr-cycle-time", "main-fail-rate"],
                "readable-scopes": ["android/*"]
            })),
        ],
        vec![principal("ada", &["admin"], ADMIN), principal("vic", &["viewer"], VIEWER)],
    )
    .unwrap()
}

pub fn standard_tokens() -> TokenTable {
    let h = SecretHash::new("ingest-salt", INGEST);
    TokenTable::new(vec![ApiToken {
        token_id: "qa-team".into(),
        principal: "qa".into(),
        salt: h.salt,
        secret_sha256: h.secret_sha256,
        allowed_collections: ["external".to_string()].into(),
    }])
    .unwrap()
}

pub struct Harness {
    pub state: Arc<AppState>,
    pub clock: Arc<ManualClock>,
    pub app: Router,
}

pub fn harness_with(store: Arc<Store>, platforms: PlatformSet, access: AccessPolicy, settings: Settings) -> Harness {
    let clock = Arc::new(ManualClock::new(t0()));
    let engine = Engine::new(EngineConfig::default(), platforms);
    let state = Arc::new(AppState::new(store, engine, standard_tokens(), access, clock.clone(), settings));
    Harness {
        app: router(state.clone()),
        state,
        clock,
    }
}

pub fn harness(store: Arc<Store>, platforms: PlatformSet) -> Harness {
    harness_with(store, platforms, standard_policy(), Settings::default())
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(|v| v.to_str().unwrap())
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: impl Into<Body>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let resp = app.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        headers,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub async fn get(app: &Router, uri: &str, token: Option<&str>) -> Reply {
    call(app, Method::GET, uri, token, Body::empty()).await
}

pub async fn post(app: &Router, uri: &str, token: Option<&str>, body: impl Into<Body>) -> Reply {
    call(app, Method::POST, uri, token, body).await
}
