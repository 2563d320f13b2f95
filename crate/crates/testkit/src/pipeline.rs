//! Scenario fixtures pushed through the real ingestion path.

use std::path::Path;

use chrono::{TimeZone, Utc};

use devpulse_core::connectors::{FixtureConnector, SourceDescriptor};
use devpulse_core::scenario::{generate, Fixtures, ScenarioSpec};
use devpulse_core::scheduler::{run_job, RetryPolicy, RunStatus};
use devpulse_core::{ManualClock, Store};

/// Writes the scenario's fixtures under `<dir>/fixtures`, then fetches every
/// source once into a store at `<dir>/store`.
pub fn ingest_scenario(spec: &ScenarioSpec, dir: &Path) -> (Store, Fixtures) {
    let fixtures = generate(spec).expect("valid scenario");
    let root = dir.join("fixtures");
    fixtures.write_to(&root).expect("fixtures written");
    let store = Store::open(dir.join("store")).expect("store opens");
    let connector = FixtureConnector::new(&root, spec.platform_set());
    let now = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let clock = ManualClock::new(now);
    for source_id in fixtures.source_ids() {
        let source = SourceDescriptor {
            source_id,
            schedule: "0 * * * *".parse().expect("cron"),
            credential_expiry: None,
        };
        let out = run_job(&source, &RetryPolicy::default(), &clock, &connector, &store, None, now);
        assert_eq!(out.run.final_status, RunStatus::Succeeded, "{}", source.source_id);
    }
    (store, fixtures)
}
