//! Scenario fixtures through ingestion, processing and storage.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use devpulse_core::domain::{MetricId, Platform, PlatformSet, Scope, WindowGranularity};
use devpulse_core::metrics::{EventSet, Origin};
use devpulse_core::scenario::{preset, Preset};
use devpulse_core::{Engine, EngineConfig, ExecutionMode, MetricValue, Store};
use devpulse_testkit::ingest_scenario;

fn android() -> Scope {
    Scope::Platform(Platform::new("android").unwrap())
}

fn daily_series(store: &Store, metric: MetricId, start: NaiveDate, days: i64) -> Vec<f64> {
    let from = start.and_hms_opt(0, 0, 0).unwrap().and_utc();
    store
        .query_metric(metric, &android(), from, from + Duration::days(days), WindowGranularity::Daily)
        .into_iter()
        .map(|p| p.value.as_number().unwrap())
        .collect()
}

#[test]
fn incident_scenario_reproduces_both_series() {
    let dir = tempfile::tempdir().unwrap();
    let spec = preset(Preset::Incident);
    let (store, _) = ingest_scenario(&spec, dir.path());
    let engine = Engine::new(EngineConfig::default(), spec.platform_set());
    let report = engine.process(&store, None, &WindowGranularity::ALL).unwrap();
    assert!(report.points > 0);

    // Plotted coordinates of the incident chart.
    let fail = [4.0, 5.0, 4.0, 6.0, 15.0, 20.0, 18.0, 16.0, 7.0, 5.0, 4.0, 5.0, 4.0, 4.0];
    let cycle = [28.0, 26.0, 29.0, 31.0, 45.0, 52.0, 55.0, 48.0, 32.0, 29.0, 28.0, 27.0, 28.0, 26.0];
    assert_eq!(daily_series(&store, MetricId::MainFailRate, spec.start, 14), fail);
    assert_eq!(daily_series(&store, MetricId::PrCycleTime, spec.start, 14), cycle);
}

#[test]
fn reprocessing_from_raw_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = preset(Preset::Steady);
    let (store, _) = ingest_scenario(&spec, dir.path());
    let engine = Engine::new(EngineConfig::default(), spec.platform_set());
    engine.process(&store, None, &WindowGranularity::ALL).unwrap();
    let file = dir.path().join("store/processed.jsonl");
    let before = std::fs::read(&file).unwrap();
    assert!(!before.is_empty());

    // Second run over the same raw data changes nothing.
    let again = engine.process(&store, None, &WindowGranularity::ALL).unwrap();
    assert_eq!(again.inserted + again.replaced, 0);
    assert_eq!(std::fs::read(&file).unwrap(), before);

    // Drop the processed namespace, reopen from disk, recompute sequentially.
    store.clear_processed().unwrap();
    drop(store);
    let reopened = Store::open(dir.path().join("store")).unwrap();
    assert_eq!(reopened.processed_len(), 0);
    let sequential = engine.clone().with_mode(ExecutionMode::Sequential);
    sequential.process(&reopened, None, &WindowGranularity::ALL).unwrap();
    assert_eq!(std::fs::read(&file).unwrap(), before);

    // Values replayed from disk serialize to the same bytes.
    drop(reopened);
    let replayed = Store::open(dir.path().join("store")).unwrap();
    assert_eq!(replayed.export_string(devpulse_core::storage::Namespace::Processed).as_bytes(), before);
    let again = sequential.process(&replayed, None, &WindowGranularity::ALL).unwrap();
    assert_eq!(again.inserted + again.replaced, 0);
}

#[test]
fn emitted_points_respect_ranges_and_never_name_people() {
    let dir = tempfile::tempdir().unwrap();
    let spec = preset(Preset::Steady);
    let (store, _) = ingest_scenario(&spec, dir.path());
    let engine = Engine::new(EngineConfig::default(), spec.platform_set());
    engine.process(&store, None, &WindowGranularity::ALL).unwrap();
    let events = EventSet::from_snapshot(&store.snapshot_raw(), &spec.platform_set());
    let people = events.authors();
    assert!(!people.is_empty());
    for p in store.all_points() {
        let rendered = p.scope.to_string().to_lowercase();
        for person in &people {
            assert!(!rendered.split('/').any(|part| part == person), "{rendered} names {person}");
        }
        if let MetricValue::Number(v) = p.value {
            assert!(v.is_finite());
            if p.metric_id.is_percent() {
                assert!((0.0..=100.0).contains(&v) || p.metric_id == MetricId::RollingMau, "{:?} {v}", p.metric_id);
            }
            if p.metric_id.is_duration() {
                assert!(v >= 0.0);
            }
        }
    }
}

fn restrict(events: &EventSet, keep: &BTreeSet<Origin>) -> EventSet {
    fn pick<T: Clone>(v: &[devpulse_core::metrics::Tagged<T>], keep: &BTreeSet<Origin>) -> Vec<devpulse_core::metrics::Tagged<T>> {
        v.iter().filter(|t| keep.contains(&t.origin)).cloned().collect()
    }
    EventSet {
        commits: pick(&events.commits, keep),
        pull_requests: pick(&events.pull_requests, keep),
        builds: pick(&events.builds, keep),
        deployments: pick(&events.deployments, keep),
        issues: pick(&events.issues, keep),
        sessions: pick(&events.sessions, keep),
        test_runs: pick(&events.test_runs, keep),
        coverage: pick(&events.coverage, keep),
        usage: pick(&events.usage, keep),
        assistant: pick(&events.assistant, keep),
        blobs: 0,
        undecodable: 0,
    }
}

#[test]
fn drilldown_records_recompute_their_point() {
    let dir = tempfile::tempdir().unwrap();
    let spec = preset(Preset::Steady);
    let (store, _) = ingest_scenario(&spec, dir.path());
    let platforms: PlatformSet = spec.platform_set();
    let engine = Engine::new(EngineConfig::default(), platforms.clone());
    engine.process(&store, None, &WindowGranularity::ALL).unwrap();
    let events = EventSet::from_snapshot(&store.snapshot_raw(), &platforms);
    let mut checked = 0;
    for p in store.all_points() {
        // Every weekly and monthly point, and every fifth daily point.
        if p.window.granularity() == WindowGranularity::Daily && p.window.start().timestamp() % 5 != 0 {
            continue;
        }
        let contributions = engine.contributors(p.metric_id, &events, &p.scope, &p.window);
        let keep: BTreeSet<Origin> = contributions.into_iter().map(|c| c.origin).collect();
        let subset = restrict(&events, &keep);
        let recomputed = engine.compute(p.metric_id, &subset.view(&p.scope), &p.window);
        let recomputed = recomputed.unwrap_or_else(|| panic!("{:?} {} {} vanished", p.metric_id, p.scope, p.window));
        assert_eq!(recomputed.value, p.value, "{:?} {} {}", p.metric_id, p.scope, p.window);
        assert_eq!(recomputed.sample_size, p.sample_size);
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn incident_day_drilldown_yields_five_failed_builds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = preset(Preset::Incident);
    let (store, _) = ingest_scenario(&spec, dir.path());
    let engine = Engine::new(EngineConfig::default(), spec.platform_set());
    let events = EventSet::from_snapshot(&store.snapshot_raw(), &spec.platform_set());
    let day6 = (spec.start + Duration::days(5)).and_hms_opt(12, 0, 0).unwrap().and_utc();
    let window = devpulse_core::domain::window_for(day6, WindowGranularity::Daily);
    let flagged: Vec<_> = engine
        .contributors(MetricId::MainFailRate, &events, &android(), &window)
        .into_iter()
        .filter(|c| c.flagged)
        .collect();
    assert_eq!(flagged.len(), 5);
    for c in &flagged {
        let versions = store.raw_versions(&c.origin.source_id, &c.origin.natural_key);
        assert_eq!(versions.last().unwrap().payload["outcome"], "failure");
    }
}
