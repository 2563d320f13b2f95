//! Permission soundness over random role sets and requests, checked against
//! a string-level permission oracle that shares no code with the server.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::http::StatusCode;
use proptest::prelude::*;

use common::*;
use devpulse_core::access::AccessPolicy;
use devpulse_core::{MetricId, PlatformSet, Store};
use devpulse_server::Settings;

const SCOPES: [&str; 6] = ["org", "android", "ios", "android/core", "android/growth", "ios/core"];
const SELECTORS: [&str; 7] = ["*", "android/*", "ios/*", "org", "android", "android/core", "ios/core"];

#[derive(Debug, Clone)]
struct GenRole {
    metrics: Option<BTreeSet<usize>>,
    selectors: BTreeSet<usize>,
    drilldown: bool,
}

fn selector_matches(selector: &str, scope: &str) -> bool {
    match selector.strip_suffix("/*") {
        _ if selector == "*" => true,
        Some(p) => scope == p || scope.starts_with(&format!("{p}/")),
        None => selector == scope,
    }
}

fn role_grants(r: &GenRole, metric: usize, scope: &str) -> bool {
    r.metrics.as_ref().is_none_or(|m| m.contains(&metric))
        && r.selectors.iter().any(|s| selector_matches(SELECTORS[*s], scope))
}

fn gen_role() -> impl Strategy<Value = GenRole> {
    (
        prop::option::weighted(0.8, prop::collection::btree_set(0..MetricId::ALL.len(), 0..6)),
        prop::collection::btree_set(0..SELECTORS.len(), 1..3),
        any::<bool>(),
    )
        .prop_map(|(metrics, selectors, drilldown)| GenRole {
            metrics,
            selectors,
            drilldown,
        })
}

fn policy(roles: &[GenRole], held: &BTreeSet<usize>) -> AccessPolicy {
    let roles_json = roles
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let metrics = match &r.metrics {
                None => serde_json::json!("*"),
                Some(set) => serde_json::json!(set.iter().map(|m| MetricId::ALL[*m].to_string()).collect::<Vec<_>>()),
            };
            role(serde_json::json!({
                "name": format!("r{i}"),
                "readable-metrics": metrics,
                "readable-scopes": r.selectors.iter().map(|s| SELECTORS[*s]).collect::<Vec<_>>(),
                "raw-drilldown": r.drilldown,
            }))
        })
        .collect();
    let names: Vec<String> = held.iter().map(|i| format!("r{i}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    AccessPolicy::new(roles_json, vec![principal("p", &names, ADMIN)]).unwrap()
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    /// Every 200 is backed by some held role granting metric and scope;
    /// every refusal is backed by the absence of one.
    #[test]
    fn responses_agree_with_permission_oracle(
        roles in prop::collection::vec(gen_role(), 1..4),
        held_bits in 1u8..8,
        metric in 0..MetricId::ALL.len(),
        scope in 0..SCOPES.len(),
    ) {
        let mut held: BTreeSet<usize> = (0..roles.len()).filter(|i| held_bits & (1 << i) != 0).collect();
        if held.is_empty() {
            held.insert(0);
        }
        let h = harness_with(
            Arc::new(Store::in_memory()),
            PlatformSet::new(["android", "ios"]).unwrap(),
            policy(&roles, &held),
            Settings::default(),
        );
        let scope_s = SCOPES[scope];
        let id = MetricId::ALL[metric];
        let readable = held.iter().any(|i| role_grants(&roles[*i], metric, scope_s));
        let drillable = held.iter().any(|i| roles[*i].drilldown && role_grants(&roles[*i], metric, scope_s));
        let sees = held.iter().any(|i| roles[*i].metrics.as_ref().is_none_or(|m| m.contains(&metric)));

        let rt = runtime();
        let (series, drill, catalog) = rt.block_on(async {
            let series = get(&h.app, &format!("/metrics/{id}?scope={scope_s}"), Some(ADMIN)).await;
            let drill = get(&h.app, &format!("/metrics/{id}/drilldown?scope={scope_s}&window=daily:2024-03-04"), Some(ADMIN)).await;
            let catalog = get(&h.app, "/catalog", Some(ADMIN)).await;
            (series.status, drill.status, catalog.json())
        });
        prop_assert_eq!(series == StatusCode::OK, readable);
        prop_assert_eq!(series, if readable { StatusCode::OK } else { StatusCode::FORBIDDEN });
        // The store is empty, so a permitted drilldown finds no point.
        prop_assert_eq!(drill, if drillable { StatusCode::NOT_FOUND } else { StatusCode::FORBIDDEN });
        let listed = catalog.as_array().unwrap().iter().any(|e| e["metric-id"] == id.to_string());
        prop_assert_eq!(listed, sees);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// A record lands in a collection only when the presenting token allows it.
    #[test]
    fn ingest_writes_only_to_allowed_collections(collection in "[a-z]{1,8}") {
        let store = Arc::new(Store::in_memory());
        let h = harness(store.clone(), PlatformSet::new(["android"]).unwrap());
        let line = r#"{"event-kind":"test-suite-run","schema-version":1,"run-id":"t1","platform":"android","ran-at":"2024-03-04T00:00:00Z","suites-total":3,"suites-passed":2}"#;
        let status = runtime().block_on(post(&h.app, &format!("/ingest/{collection}"), Some(INGEST), line)).status;
        let allowed = collection == "external";
        prop_assert_eq!(status, if allowed { StatusCode::OK } else { StatusCode::FORBIDDEN });
        prop_assert_eq!(store.raw_sources(), if allowed { vec![collection] } else { vec![] });
    }
}
