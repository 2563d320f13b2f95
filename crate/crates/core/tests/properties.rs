//! Cross-module properties: retries, rate limits, watermarks, alerting and
//! metric monotonicity.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use devpulse_core::alerting::{evaluate, AlertRule, FireHistory, MemorySink, Notification, Notifier};
use devpulse_core::connectors::{
    Connector, EventCursor, FetchOutcome, FixtureConnector, ScriptedConnector, SourceDescriptor, Watermark,
};
use devpulse_core::domain::{
    window_for, BuildEvent, BuildOutcome, EngineeringEvent, Platform, PlatformSet, Timestamp, TriggerKind,
    WindowGranularity,
};
use devpulse_core::metrics::compute::main_fail_rate;
use devpulse_core::scheduler::{RunStatus, Scheduler, SchedulerConfig};
use devpulse_core::{Clock, ManualClock, RawRecord, Store};

fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2024, 3, 4, 2, 0, 0).unwrap()
}

fn source() -> SourceDescriptor {
    SourceDescriptor {
        source_id: "splunk".into(),
        schedule: "0 2 * * *".parse().unwrap(),
        credential_expiry: None,
    }
}

fn record(key: &str) -> RawRecord {
    RawRecord {
        source_id: "splunk".into(),
        natural_key: key.into(),
        fetched_at: t0(),
        payload: serde_json::json!({"k": key}),
    }
}

struct Rig {
    clock: Arc<ManualClock>,
    store: Arc<Store>,
    sink: Arc<MemorySink>,
    scheduler: Scheduler,
    connector: Arc<ScriptedConnector>,
}

fn rig(script: Vec<FetchOutcome>) -> Rig {
    let clock = Arc::new(ManualClock::new(t0()));
    let store = Arc::new(Store::in_memory());
    let sink = Arc::new(MemorySink::new());
    let notifier = Arc::new(Notifier::new().with_sink("ops", sink.clone()).with_failure_channel("ops"));
    let connector = Arc::new(ScriptedConnector::new(script));
    let mut scheduler =
        Scheduler::new(SchedulerConfig::default(), clock.clone(), store.clone(), notifier).unwrap();
    scheduler.register(source(), connector.clone()).unwrap();
    Rig {
        clock,
        store,
        sink,
        scheduler,
        connector,
    }
}

fn success(keys: &[&str], mark: &str) -> FetchOutcome {
    FetchOutcome::Success {
        records: keys.iter().map(|k| record(k)).collect(),
        watermark: Watermark(serde_json::json!(mark)),
    }
}

#[test]
fn four_failures_then_success_uses_five_attempts_with_growing_delays() {
    let mut script: Vec<FetchOutcome> = (0..4).map(|i| FetchOutcome::TransientFailure(format!("f{i}"))).collect();
    script.push(success(&["a", "b"], "w1"));
    let r = rig(script);
    let run = r.scheduler.execute(r.scheduler.claim_now("splunk").unwrap());
    assert_eq!(run.final_status, RunStatus::Succeeded);
    assert_eq!(run.attempts.len(), 5);
    let gaps: Vec<i64> = run
        .attempts
        .windows(2)
        .map(|w| (w[1].started_at - w[0].started_at).num_milliseconds())
        .collect();
    assert_eq!(gaps, [1000, 2000, 4000, 8000]);
    assert_eq!(r.store.raw_len(), 2);
    assert_eq!(r.scheduler.watermark("splunk"), Some(Watermark(serde_json::json!("w1"))));
    assert!(r.sink.received().is_empty());
}

#[test]
fn five_failures_exhaust_and_notify_once() {
    let mut script: Vec<FetchOutcome> = (0..5).map(|i| FetchOutcome::TransientFailure(format!("f{i}"))).collect();
    script.push(success(&["late"], "w2"));
    let r = rig(script);
    let run = r.scheduler.execute(r.scheduler.claim_now("splunk").unwrap());
    assert_eq!(run.final_status, RunStatus::Exhausted);
    assert_eq!(run.attempts.len(), 5);
    assert_eq!(r.connector.calls(), 5);
    assert_eq!(r.store.raw_len(), 0);
    assert_eq!(r.scheduler.watermark("splunk"), None);
    let received = r.sink.received();
    assert_eq!(received.len(), 1);
    assert!(matches!(&received[0], Notification::JobFailed(f) if f.attempts == 5));
}

#[test]
fn retry_after_is_honoured_on_the_simulated_clock() {
    let r = rig(vec![FetchOutcome::RateLimited(Duration::from_secs(30)), success(&["x"], "w")]);
    let run = r.scheduler.execute(r.scheduler.claim_now("splunk").unwrap());
    assert_eq!(run.final_status, RunStatus::Succeeded);
    let gap = run.attempts[1].started_at - run.attempts[0].started_at;
    assert!(gap >= chrono::Duration::seconds(30), "{gap}");
    assert!(r.clock.now() >= t0() + chrono::Duration::seconds(30));
}

#[test]
fn failed_run_keeps_previous_watermark() {
    let mut script = vec![success(&["a"], "w1")];
    script.extend((0..5).map(|_| FetchOutcome::PermanentFailure("401".into())));
    let r = rig(script);
    r.scheduler.execute(r.scheduler.claim_now("splunk").unwrap());
    let before = r.store.export_string(devpulse_core::storage::Namespace::Raw);
    let run = r.scheduler.execute(r.scheduler.claim_now("splunk").unwrap());
    assert_eq!(run.final_status, RunStatus::Exhausted);
    assert_eq!(r.scheduler.watermark("splunk"), Some(Watermark(serde_json::json!("w1"))));
    assert_eq!(r.store.export_string(devpulse_core::storage::Namespace::Raw), before);
}

fn build_line(id: usize, minute: u32, main: bool, failed: bool) -> String {
    let at = Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap() + chrono::Duration::minutes(minute as i64);
    EngineeringEvent::Build(BuildEvent {
        build_id: format!("b{id}"),
        platform: Platform::new("android").unwrap(),
        branch: "main".into(),
        is_main_branch: main,
        trigger_kind: TriggerKind::Main,
        pr_id: None,
        triggered_at: at,
        finished_at: at,
        outcome: if failed { BuildOutcome::Failure } else { BuildOutcome::Success },
    })
    .to_canonical_json()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Fetching a growing fixture batch by batch never moves the cursor
    /// backwards and never delivers the same record twice.
    #[test]
    fn watermark_is_monotone_and_fetches_are_disjoint(
        batches in prop::collection::vec(prop::collection::vec((0u32..600, any::<bool>()), 0..12), 1..6)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let src_dir = dir.path().join("splunk");
        std::fs::create_dir_all(&src_dir).unwrap();
        let platforms = PlatformSet::new(["android"]).unwrap();
        let connector = FixtureConnector::new(dir.path(), platforms);
        let mut watermark: Option<Watermark> = None;
        let mut last_after: Option<Timestamp> = None;
        let mut delivered = BTreeSet::new();
        let mut next_id = 0;
        for (i, batch) in batches.iter().enumerate() {
            let mut text = String::new();
            for (minute, garbage) in batch {
                if *garbage && minute % 7 == 0 {
                    text.push_str(&format!("not json {minute}\n"));
                } else {
                    text.push_str(&build_line(next_id, *minute, true, *garbage));
                    text.push('\n');
                }
                next_id += 1;
            }
            std::fs::write(src_dir.join(format!("{i:03}.jsonl")), text).unwrap();
            match connector.fetch(&source(), watermark.as_ref(), t0()) {
                FetchOutcome::Success { records, watermark: w } => {
                    for r in records {
                        prop_assert!(delivered.insert(r.natural_key.clone()), "{} twice", r.natural_key);
                    }
                    let after = EventCursor::from_watermark(Some(&w)).after;
                    prop_assert!(after >= last_after);
                    last_after = after;
                    watermark = Some(w);
                }
                other => prop_assert!(false, "unexpected {}", other.label()),
            }
        }
    }

    /// One more failed main build never lowers the fail rate.
    #[test]
    fn extra_failure_never_lowers_fail_rate(
        builds in prop::collection::vec((0u32..1440, any::<bool>(), any::<bool>()), 0..60),
        minute in 0u32..1440,
    ) {
        let window = window_for(Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap(), WindowGranularity::Daily);
        let platforms = PlatformSet::new(["android"]).unwrap();
        let mut events: Vec<BuildEvent> = builds
            .iter()
            .enumerate()
            .map(|(i, (m, main, failed))| match EngineeringEvent::parse(&build_line(i, *m, *main, *failed), &platforms).unwrap() {
                EngineeringEvent::Build(b) => b,
                _ => unreachable!(),
            })
            .collect();
        let before = {
            let refs: Vec<&BuildEvent> = events.iter().collect();
            main_fail_rate(&refs, &window).map(|c| c.as_number().unwrap())
        };
        match EngineeringEvent::parse(&build_line(9999, minute, true, true), &platforms).unwrap() {
            EngineeringEvent::Build(b) => events.push(b),
            _ => unreachable!(),
        }
        let refs: Vec<&BuildEvent> = events.iter().collect();
        let after = main_fail_rate(&refs, &window).unwrap().as_number().unwrap();
        prop_assert!(before.is_none_or(|b| after >= b));
    }

    /// Within one cooldown a rule fires at most once, however many points
    /// breach it or how often it is re-evaluated.
    #[test]
    fn cooldown_bounds_fires(values in prop::collection::vec(0.0f64..10.0, 1..30), rounds in 1usize..5) {
        use devpulse_core::domain::{MetricId, Scope};
        use devpulse_core::{MetricPoint, MetricValue};
        let rule: AlertRule = serde_json::from_value(serde_json::json!({
            "rule-id": "crash", "metric-id": "user-crash-rate", "scope": "*",
            "comparator": "gt", "threshold": 5.0, "channel": "ops"
        })).unwrap();
        let start = Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap();
        let points: Vec<MetricPoint> = values.iter().enumerate().map(|(i, v)| MetricPoint {
            metric_id: MetricId::UserCrashRate,
            scope: Scope::Platform(Platform::new("android").unwrap()),
            window: window_for(start + chrono::Duration::days(i as i64), WindowGranularity::Daily),
            value: MetricValue::Number(*v),
            computed_at: start,
            sample_size: 1,
            extras: Default::default(),
        }).collect();
        let mut history = FireHistory::default();
        let mut fired = 0;
        for k in 0..rounds {
            fired += evaluate(&points, std::slice::from_ref(&rule), &mut history, start + chrono::Duration::hours(k as i64)).len();
        }
        let any_breach = values.iter().any(|v| *v > 5.0);
        prop_assert_eq!(fired, usize::from(any_breach));
    }
}
