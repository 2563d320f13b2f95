//! Brute-force reference implementation of every metric.
//!
//! Deliberately naive: each cell rescans the full event list, medians come
//! from a full sort, and first deployments are found by nested loops. It
//! shares no code with the engine beyond the event types.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{NaiveDate, TimeZone, Utc};

use devpulse_core::domain::{
    AutomationStatus, BuildOutcome, EngineeringEvent, IssueKind, IssuePriority, IssueStatus,
    MetricId, PrState, Scope, TimeWindow, Timestamp, TriggerKind, WindowGranularity, YearMonth,
};
use devpulse_core::metrics::{ComputationRequest, EventSet};
use devpulse_core::storage::MetricValue;
use devpulse_core::Engine;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleValue {
    Number(f64),
    Distribution(BTreeMap<String, u64>),
    Triple(u64, u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCell {
    pub value: OracleValue,
    pub sample_size: u64,
    pub extras: BTreeMap<String, f64>,
}

impl OracleCell {
    fn number(v: f64, n: u64) -> Self {
        Self {
            value: OracleValue::Number(v),
            sample_size: n,
            extras: BTreeMap::new(),
        }
    }
}

/// Parameters the oracle needs from configuration.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub main_branches: Vec<String>,
    pub rolling_months: u32,
    pub baseline: Option<YearMonth>,
}

fn secs_to_hours(a: Timestamp, b: Timestamp) -> f64 {
    (b - a).num_milliseconds() as f64 / 3_600_000.0
}

fn midnight(d: NaiveDate) -> Timestamp {
    Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).unwrap())
}

fn inside(w: &TimeWindow, t: Timestamp) -> bool {
    t >= w.start() && t < w.end()
}

fn window_days(w: &TimeWindow) -> f64 {
    ((w.end() - w.start()).num_seconds() / 86_400) as f64
}

fn sorted_median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn pct(a: u64, b: u64) -> f64 {
    a as f64 * 100.0 / b as f64
}

fn person(raw: &str) -> Option<String> {
    let t = raw.trim();
    let local = t.split('@').next().unwrap_or("").trim().to_lowercase();
    (!local.is_empty()).then_some(local)
}

/// Events visible in `scope`: the org sees everything, a platform sees its
/// own events, a team sees only pull requests labelled with it.
fn in_scope(scope: &Scope, e: &EngineeringEvent) -> bool {
    let platform = e.platform().as_str();
    match scope {
        Scope::Org => true,
        Scope::Platform(p) => p.as_str() == platform,
        Scope::Team { platform: p, team } => match e {
            EngineeringEvent::PullRequest(pr) => p.as_str() == platform && pr.team == *team,
            _ => false,
        },
    }
}

/// Reference value of one cell, `None` when no point should exist.
pub fn oracle_value(
    cfg: &OracleConfig,
    metric: MetricId,
    events: &[EngineeringEvent],
    scope: &Scope,
    w: &TimeWindow,
) -> Option<OracleCell> {
    let team_ok = matches!(metric, MetricId::PrCycleTime | MetricId::PrThroughput);
    if matches!(scope, Scope::Team { .. }) && !team_ok {
        return None;
    }
    let monthly = w.granularity() == WindowGranularity::Monthly;
    if matches!(metric, MetricId::Mau | MetricId::RollingMau) && !monthly {
        return None;
    }
    let ev: Vec<&EngineeringEvent> = events.iter().filter(|e| in_scope(scope, e)).collect();
    macro_rules! each {
        ($variant:ident) => {
            ev.iter().filter_map(|e| match e {
                EngineeringEvent::$variant(x) => Some(x),
                _ => None,
            })
        };
    }

    match metric {
        MetricId::LeadTimeForChanges => {
            let mut samples = Vec::new();
            for c in each!(Commit) {
                let mut first: Option<Timestamp> = None;
                for d in each!(Deployment) {
                    if d.outcome == BuildOutcome::Success
                        && d.platform == c.platform
                        && d.commit_ids.contains(&c.commit_id)
                        && first.is_none_or(|f| d.deployed_at < f)
                    {
                        first = Some(d.deployed_at);
                    }
                }
                if let Some(f) = first {
                    if inside(w, f) && f >= c.committed_at {
                        samples.push(secs_to_hours(c.committed_at, f));
                    }
                }
            }
            let n = samples.len() as u64;
            sorted_median(samples).map(|m| OracleCell::number(m, n))
        }
        MetricId::PrCycleTime => {
            let samples: Vec<f64> = each!(PullRequest)
                .filter(|p| p.state == PrState::Merged)
                .filter_map(|p| p.merged_at.filter(|m| inside(w, *m)).map(|m| secs_to_hours(p.created_at, m)))
                .collect();
            let n = samples.len() as u64;
            sorted_median(samples).map(|m| OracleCell::number(m, n))
        }
        MetricId::PrThroughput => {
            let n = each!(PullRequest)
                .filter(|p| p.state == PrState::Merged && p.merged_at.is_some_and(|m| inside(w, m)))
                .count() as u64;
            Some(OracleCell::number(n as f64 * 7.0 / window_days(w), n))
        }
        MetricId::CommitFrequency => {
            let picked: Vec<_> = each!(Commit)
                .filter(|c| inside(w, c.committed_at) && cfg.main_branches.contains(&c.branch))
                .collect();
            let devs: BTreeSet<String> = picked.iter().filter_map(|c| person(&c.author_id)).collect();
            if picked.is_empty() || devs.is_empty() {
                return None;
            }
            let n = picked.len() as u64;
            Some(OracleCell::number(n as f64 / (devs.len() as f64 * window_days(w)), n))
        }
        MetricId::BuildInducedLatency => {
            let samples: Vec<f64> = each!(Build)
                .filter(|b| b.trigger_kind == TriggerKind::PrFeedback && inside(w, b.finished_at))
                .map(|b| secs_to_hours(b.triggered_at, b.finished_at))
                .collect();
            let n = samples.len() as u64;
            sorted_median(samples).map(|m| OracleCell::number(m, n))
        }
        MetricId::CopilotAcceptanceRate => {
            let rows: Vec<_> = each!(AssistantUsage).filter(|a| inside(w, midnight(a.day))).collect();
            let shown: u64 = rows.iter().map(|a| a.suggestions_shown).sum();
            if shown == 0 {
                return None;
            }
            let accepted: u64 = rows.iter().map(|a| a.suggestions_accepted).sum();
            let declined: u64 = rows.iter().map(|a| a.suggestions_declined).sum();
            let lines: u64 = rows.iter().map(|a| a.lines_generated).sum();
            let mut cell = OracleCell::number(pct(accepted, shown), rows.len() as u64);
            cell.extras = BTreeMap::from([
                ("suggestions-shown".to_string(), shown as f64),
                ("suggestions-accepted".to_string(), accepted as f64),
                ("suggestions-declined".to_string(), declined as f64),
                ("decline-rate".to_string(), pct(declined, shown)),
                ("lines-generated".to_string(), lines as f64),
            ]);
            Some(cell)
        }
        MetricId::Stability | MetricId::UserCrashRate => {
            let rows: Vec<_> = each!(SessionStats).filter(|s| inside(w, midnight(s.day))).collect();
            let (part, whole) = if metric == MetricId::Stability {
                (
                    rows.iter().map(|s| s.crash_free_users).sum::<u64>(),
                    rows.iter().map(|s| s.total_users).sum::<u64>(),
                )
            } else {
                (
                    rows.iter().map(|s| s.crashed_sessions).sum::<u64>(),
                    rows.iter().map(|s| s.total_sessions).sum::<u64>(),
                )
            };
            (whole > 0).then(|| OracleCell::number(pct(part, whole), rows.len() as u64))
        }
        MetricId::BlockerCriticalOpen | MetricId::BugMix | MetricId::AutomationStatus => {
            // Latest snapshot strictly before the window end, per issue.
            let mut latest: BTreeMap<&str, &devpulse_core::domain::IssueEvent> = BTreeMap::new();
            for i in each!(Issue) {
                if i.snapshot_at >= w.end() {
                    continue;
                }
                let replace = latest.get(i.issue_id.as_str()).is_none_or(|cur| i.snapshot_at > cur.snapshot_at);
                if replace {
                    latest.insert(&i.issue_id, i);
                }
            }
            let open_bugs: Vec<_> = latest
                .values()
                .filter(|i| i.kind == IssueKind::Bug && i.status == IssueStatus::Open)
                .collect();
            match metric {
                MetricId::BlockerCriticalOpen => {
                    let n = open_bugs
                        .iter()
                        .filter(|i| i.priority == IssuePriority::Blocker || i.priority == IssuePriority::Critical)
                        .count() as u64;
                    Some(OracleCell::number(n as f64, n))
                }
                MetricId::BugMix => {
                    let mut dist = BTreeMap::new();
                    for (name, prio) in [
                        ("blocker", IssuePriority::Blocker),
                        ("critical", IssuePriority::Critical),
                        ("major", IssuePriority::Major),
                        ("normal", IssuePriority::Normal),
                        ("minor", IssuePriority::Minor),
                    ] {
                        dist.insert(name.to_string(), open_bugs.iter().filter(|i| i.priority == prio).count() as u64);
                    }
                    Some(OracleCell {
                        value: OracleValue::Distribution(dist),
                        sample_size: open_bugs.len() as u64,
                        extras: BTreeMap::new(),
                    })
                }
                _ => {
                    let count = |s: AutomationStatus| {
                        latest.values().filter(|i| i.automation_status == Some(s)).count() as u64
                    };
                    let t = (
                        count(AutomationStatus::ToBeAutomated),
                        count(AutomationStatus::Automated),
                        count(AutomationStatus::CannotAutomate),
                    );
                    Some(OracleCell {
                        value: OracleValue::Triple(t.0, t.1, t.2),
                        sample_size: t.0 + t.1 + t.2,
                        extras: BTreeMap::new(),
                    })
                }
            }
        }
        MetricId::DeploymentFrequency => {
            let n = each!(Deployment)
                .filter(|d| d.outcome == BuildOutcome::Success && inside(w, d.deployed_at))
                .count() as u64;
            Some(OracleCell::number(n as f64 * 7.0 / window_days(w), n))
        }
        MetricId::MainFailRate => {
            let main: Vec<_> = each!(Build).filter(|b| b.is_main_branch && inside(w, b.finished_at)).collect();
            let failed = main.iter().filter(|b| b.outcome == BuildOutcome::Failure).count() as u64;
            (!main.is_empty()).then(|| OracleCell::number(pct(failed, main.len() as u64), main.len() as u64))
        }
        MetricId::AvgTurnaroundTime => {
            let samples: Vec<f64> = each!(Build)
                .filter(|b| b.outcome == BuildOutcome::Success && inside(w, b.finished_at))
                .map(|b| secs_to_hours(b.triggered_at, b.finished_at))
                .collect();
            (!samples.is_empty()).then(|| {
                OracleCell::number(samples.iter().sum::<f64>() / samples.len() as f64, samples.len() as u64)
            })
        }
        MetricId::AutomationCoverage => {
            let rows: Vec<_> = each!(Coverage).filter(|c| inside(w, c.measured_at)).collect();
            let platforms: BTreeSet<&str> = rows.iter().map(|c| c.platform.as_str()).collect();
            let (mut covered, mut total) = (0u64, 0u64);
            for p in &platforms {
                let newest = rows
                    .iter()
                    .filter(|c| c.platform.as_str() == *p)
                    .max_by_key(|c| c.measured_at)
                    .unwrap();
                covered += newest.statements_covered;
                total += newest.statements_total;
            }
            (total > 0).then(|| OracleCell::number(pct(covered, total), platforms.len() as u64))
        }
        MetricId::AutomationHealth => {
            let rows: Vec<_> = each!(TestSuiteRun).filter(|r| inside(w, r.ran_at)).collect();
            let total: u64 = rows.iter().map(|r| r.suites_total).sum();
            let passed: u64 = rows.iter().map(|r| r.suites_passed).sum();
            (total > 0).then(|| OracleCell::number(pct(passed, total), rows.len() as u64))
        }
        MetricId::Mau | MetricId::RollingMau => {
            let month = YearMonth::of(w.start().date_naive());
            let usage: Vec<_> = each!(UsageStats).collect();
            let mau_of = |m: YearMonth| -> Option<u64> {
                let rows: Vec<_> = usage.iter().filter(|u| u.month == m).collect();
                (!rows.is_empty()).then(|| rows.iter().map(|u| u.active_users).sum())
            };
            let current = mau_of(month)?;
            if metric == MetricId::Mau {
                let n = usage.iter().filter(|u| u.month == month).count() as u64;
                return Some(OracleCell::number(current as f64, n));
            }
            let first = usage.iter().map(|u| u.month).min()?;
            let base = mau_of(cfg.baseline.unwrap_or(first)).filter(|b| *b > 0)?;
            let mut trailing = Vec::new();
            let mut m = month;
            for _ in 0..cfg.rolling_months.max(1) {
                if let Some(v) = mau_of(m) {
                    trailing.push(v as f64);
                }
                m = m.minus(1);
            }
            let mean = trailing.iter().sum::<f64>() / trailing.len() as f64;
            Some(OracleCell::number(mean * 100.0 / base as f64, trailing.len() as u64))
        }
    }
}

/// A cell where engine and oracle disagree.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub metric: MetricId,
    pub scope: Scope,
    pub window: TimeWindow,
    pub engine: Option<String>,
    pub oracle: Option<String>,
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn same(engine: &devpulse_core::MetricPoint, oracle: &OracleCell, rel: f64) -> bool {
    if engine.sample_size != oracle.sample_size {
        return false;
    }
    let values = match (&engine.value, &oracle.value) {
        (MetricValue::Number(a), OracleValue::Number(b)) => close(*a, *b, rel),
        (MetricValue::Distribution(a), OracleValue::Distribution(b)) => a == b,
        (
            MetricValue::StatusTriple {
                to_be_automated,
                automated,
                cannot_automate,
            },
            OracleValue::Triple(x, y, z),
        ) => (*to_be_automated, *automated, *cannot_automate) == (*x, *y, *z),
        _ => false,
    };
    values
        && engine.extras.len() == oracle.extras.len()
        && engine
            .extras
            .iter()
            .all(|(k, v)| oracle.extras.get(k).is_some_and(|o| close(*v, *o, rel)))
}

/// Evaluates every metric over `windows` and every scope of `events` with
/// the engine, then checks each cell against the oracle. Numbers must agree
/// within `rel` relative error; counts, distributions and sample sizes
/// exactly. Returns the number of cells checked.
pub fn compare_with_engine(
    engine: &Engine,
    events: &[EngineeringEvent],
    windows: &[TimeWindow],
    rel: f64,
) -> Result<usize, Vec<Mismatch>> {
    let set = EventSet::from_events("oracle", events.iter().cloned());
    let mut scopes: BTreeSet<Scope> = BTreeSet::from([Scope::Org]);
    for e in events {
        scopes.insert(Scope::Platform(e.platform().clone()));
        if let EngineeringEvent::PullRequest(pr) = e {
            scopes.insert(Scope::team(pr.platform.clone(), pr.team.clone()).expect("valid team"));
        }
    }
    for p in engine.platforms().iter() {
        scopes.insert(Scope::Platform(p.clone()));
    }
    let request = ComputationRequest::new(MetricId::ALL, scopes.iter().cloned(), windows.iter().cloned())
        .expect("non-empty request");
    let computed_at = Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap();
    let evaluation = engine.evaluate(&set, &request, computed_at);
    let mut by_cell: BTreeMap<(MetricId, Scope, String), &devpulse_core::MetricPoint> = BTreeMap::new();
    for p in &evaluation.points {
        by_cell.insert((p.metric_id, p.scope.clone(), p.window.key()), p);
    }
    let cfg = OracleConfig {
        main_branches: engine.config().main_branches.clone(),
        rolling_months: engine.config().rolling_mau.window_months,
        baseline: engine.config().rolling_mau.baseline,
    };
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for scope in &scopes {
        for w in windows {
            for metric in MetricId::ALL {
                checked += 1;
                let want = oracle_value(&cfg, metric, events, scope, w);
                let got = by_cell.remove(&(metric, scope.clone(), w.key()));
                let ok = match (&got, &want) {
                    (None, None) => true,
                    (Some(g), Some(o)) => same(g, o, rel),
                    _ => false,
                };
                if !ok {
                    mismatches.push(Mismatch {
                        metric,
                        scope: scope.clone(),
                        window: w.clone(),
                        engine: got.map(|g| format!("{:?} n={} extras={:?}", g.value, g.sample_size, g.extras)),
                        oracle: want.map(|o| format!("{:?} n={} extras={:?}", o.value, o.sample_size, o.extras)),
                    });
                }
            }
        }
    }
    if !by_cell.is_empty() {
        for ((metric, scope, _), p) in by_cell {
            mismatches.push(Mismatch {
                metric,
                scope,
                window: p.window.clone(),
                engine: Some(format!("{:?}", p.value)),
                oracle: Some("<cell not requested>".into()),
            });
        }
    }
    if mismatches.is_empty() {
        Ok(checked)
    } else {
        Err(mismatches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use devpulse_core::domain::{window_for, BuildEvent, Platform};

    #[test]
    fn median_rule() {
        assert_eq!(sorted_median(vec![26.0, 30.0]), Some(28.0));
        assert_eq!(sorted_median(vec![100.0, 2.0, 4.0]), Some(4.0));
        assert_eq!(sorted_median(vec![]), None);
    }

    #[test]
    fn fail_rate_by_hand() {
        let t = |h| Utc.with_ymd_and_hms(2024, 3, 4, h, 0, 0).unwrap();
        let build = |id: &str, outcome| {
            EngineeringEvent::Build(BuildEvent {
                build_id: id.into(),
                platform: Platform::new("android").unwrap(),
                branch: "main".into(),
                is_main_branch: true,
                trigger_kind: TriggerKind::Main,
                pr_id: None,
                triggered_at: t(1),
                finished_at: t(2),
                outcome,
            })
        };
        let mut events: Vec<_> = (0..24).map(|i| build(&format!("b{i}"), BuildOutcome::Success)).collect();
        events.push(build("bad", BuildOutcome::Failure));
        let cfg = OracleConfig {
            main_branches: vec!["main".into()],
            rolling_months: 3,
            baseline: None,
        };
        let w = window_for(t(0), WindowGranularity::Daily);
        let cell = oracle_value(&cfg, MetricId::MainFailRate, &events, &Scope::Org, &w).unwrap();
        assert_eq!(cell.value, OracleValue::Number(4.0));
        assert_eq!(cell.sample_size, 25);
    }
}
