//! Per-metric computations.
//!
//! Every function here is pure: it takes the events of one scope and a
//! window (or an as-of instant for snapshot metrics) and returns the value
//! with its sample size, or `None` when the sample is empty and the metric
//! is undefined. Event selection goes through the `selects_*` predicates so
//! that drill-down can reuse exactly the same rules.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::Duration;

use crate::domain::{
    standardize_user_id, AssistantUsageEvent, AutomationStatus, BuildEvent, BuildOutcome,
    CommitEvent, CoverageEvent, DeploymentEvent, IssueEvent, IssueKind, IssuePriority,
    IssueStatus, Platform, PrState, PullRequestEvent, SessionStatsEvent, TestSuiteRunEvent,
    TimeWindow, Timestamp, TriggerKind, UsageStatsEvent, YearMonth,
};
use crate::storage::MetricValue;

#[derive(Debug, Clone, PartialEq)]
pub struct Computed {
    pub value: MetricValue,
    pub sample_size: u64,
    pub extras: BTreeMap<String, f64>,
}

impl Computed {
    fn number(value: f64, sample_size: u64) -> Self {
        Self {
            value: MetricValue::Number(value),
            sample_size,
            extras: BTreeMap::new(),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        self.value.as_number()
    }
}

pub(crate) fn hours(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 3_600_000.0
}

fn percent(part: u64, whole: u64) -> f64 {
    100.0 * part as f64 / whole as f64
}

fn per_week(count: u64, window: &TimeWindow) -> f64 {
    count as f64 * 7.0 / window.days() as f64
}

/// Median; for an even count, the mean of the two middle values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if n % 2 == 1 {
        Some(upper)
    } else {
        let lower_max = lower.iter().copied().max_by(cmp).expect("n >= 2");
        Some((lower_max + upper) / 2.0)
    }
}

/// Last instant that still belongs to `window`; snapshot metrics are
/// evaluated as of this instant.
pub fn as_of(window: &TimeWindow) -> Timestamp {
    window.end() - Duration::nanoseconds(1)
}

// Selection predicates.

pub fn selects_pr_merge(pr: &PullRequestEvent, window: &TimeWindow) -> bool {
    pr.state == PrState::Merged && pr.merged_at.is_some_and(|m| window.contains(m))
}

pub fn selects_main_commit(c: &CommitEvent, window: &TimeWindow, main_branches: &[String]) -> bool {
    window.contains(c.committed_at) && main_branches.iter().any(|b| *b == c.branch)
}

pub fn selects_feedback_build(b: &BuildEvent, window: &TimeWindow) -> bool {
    b.trigger_kind == TriggerKind::PrFeedback && window.contains(b.finished_at)
}

pub fn selects_main_build(b: &BuildEvent, window: &TimeWindow) -> bool {
    b.is_main_branch && window.contains(b.finished_at)
}

pub fn selects_successful_build(b: &BuildEvent, window: &TimeWindow) -> bool {
    b.outcome == BuildOutcome::Success && window.contains(b.finished_at)
}

pub fn selects_successful_deployment(d: &DeploymentEvent, window: &TimeWindow) -> bool {
    d.outcome == BuildOutcome::Success && window.contains(d.deployed_at)
}

pub fn selects_day(day: chrono::NaiveDate, window: &TimeWindow) -> bool {
    window.contains_date(day)
}

/// For every commit, the first successful deployment that shipped it, as
/// `(commit index, deployment index)` pairs, restricted to deployments
/// landing inside `window` and to non-negative lead times.
pub fn first_deliveries(
    commits: &[&CommitEvent],
    deployments: &[&DeploymentEvent],
    window: &TimeWindow,
) -> Vec<(usize, usize)> {
    let mut first: HashMap<(&Platform, &str), usize> = HashMap::new();
    for (i, d) in deployments.iter().enumerate() {
        if d.outcome != BuildOutcome::Success {
            continue;
        }
        for id in &d.commit_ids {
            first
                .entry((&d.platform, id.as_str()))
                .and_modify(|cur| {
                    if d.deployed_at < deployments[*cur].deployed_at {
                        *cur = i;
                    }
                })
                .or_insert(i);
        }
    }
    let mut pairs = Vec::new();
    for (ci, c) in commits.iter().enumerate() {
        if let Some(&di) = first.get(&(&c.platform, c.commit_id.as_str())) {
            let d = deployments[di];
            if window.contains(d.deployed_at) && d.deployed_at >= c.committed_at {
                pairs.push((ci, di));
            }
        }
    }
    pairs
}

/// Median hours from commit to its first successful production deployment,
/// over commits whose first deployment lands in `window`.
pub fn lead_time_for_changes(
    commits: &[&CommitEvent],
    deployments: &[&DeploymentEvent],
    window: &TimeWindow,
) -> Option<Computed> {
    let mut samples: Vec<f64> = first_deliveries(commits, deployments, window)
        .into_iter()
        .map(|(ci, di)| hours(deployments[di].deployed_at - commits[ci].committed_at))
        .collect();
    let n = samples.len() as u64;
    median(&mut samples).map(|m| Computed::number(m, n))
}

/// Median hours from PR creation to merge over PRs merged in `window`.
pub fn pr_cycle_time(prs: &[&PullRequestEvent], window: &TimeWindow) -> Option<Computed> {
    let mut samples: Vec<f64> = prs
        .iter()
        .filter(|p| selects_pr_merge(p, window))
        .filter_map(|p| p.merged_at.map(|m| hours(m - p.created_at)))
        .collect();
    let n = samples.len() as u64;
    median(&mut samples).map(|m| Computed::number(m, n))
}

/// Main-branch commits per distinct developer per day.
pub fn commit_frequency(
    commits: &[&CommitEvent],
    window: &TimeWindow,
    main_branches: &[String],
) -> Option<Computed> {
    let selected: Vec<&&CommitEvent> = commits
        .iter()
        .filter(|c| selects_main_commit(c, window, main_branches))
        .collect();
    if selected.is_empty() {
        return None;
    }
    let devs: BTreeSet<String> = selected
        .iter()
        .filter_map(|c| standardize_user_id(&c.author_id).ok())
        .collect();
    if devs.is_empty() {
        return None;
    }
    let rate = selected.len() as f64 / (devs.len() as f64 * window.days() as f64);
    Some(Computed::number(rate, selected.len() as u64))
}

/// Median hours of CI feedback for PR-triggered builds finishing in `window`.
pub fn build_induced_latency(builds: &[&BuildEvent], window: &TimeWindow) -> Option<Computed> {
    let mut samples: Vec<f64> = builds
        .iter()
        .filter(|b| selects_feedback_build(b, window))
        .map(|b| hours(b.finished_at - b.triggered_at))
        .collect();
    let n = samples.len() as u64;
    median(&mut samples).map(|m| Computed::number(m, n))
}

/// Merged PRs scaled to a per-week rate. Defined (possibly zero) for every
/// window.
pub fn pr_throughput(prs: &[&PullRequestEvent], window: &TimeWindow) -> Computed {
    let merged = prs.iter().filter(|p| selects_pr_merge(p, window)).count() as u64;
    Computed::number(per_week(merged, window), merged)
}

/// Percent of assistant suggestions accepted. Companion totals are reported
/// as extras.
pub fn copilot_acceptance_rate(
    usage: &[&AssistantUsageEvent],
    window: &TimeWindow,
) -> Option<Computed> {
    let (mut shown, mut accepted, mut declined, mut lines, mut n) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for u in usage.iter().filter(|u| selects_day(u.day, window)) {
        shown += u.suggestions_shown;
        accepted += u.suggestions_accepted;
        declined += u.suggestions_declined;
        lines += u.lines_generated;
        n += 1;
    }
    if shown == 0 {
        return None;
    }
    let mut c = Computed::number(percent(accepted, shown), n);
    c.extras.insert("suggestions-shown".into(), shown as f64);
    c.extras.insert("suggestions-accepted".into(), accepted as f64);
    c.extras.insert("suggestions-declined".into(), declined as f64);
    c.extras.insert("decline-rate".into(), percent(declined, shown));
    c.extras.insert("lines-generated".into(), lines as f64);
    Some(c)
}

/// `(stability, user crash rate)`: percent of users without a crash, and
/// percent of sessions that crashed.
pub fn stability_and_crash_rate(
    stats: &[&SessionStatsEvent],
    window: &TimeWindow,
) -> (Option<Computed>, Option<Computed>) {
    let (mut users, mut free, mut sessions, mut crashed, mut n) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for s in stats.iter().filter(|s| selects_day(s.day, window)) {
        users += s.total_users;
        free += s.crash_free_users;
        sessions += s.total_sessions;
        crashed += s.crashed_sessions;
        n += 1;
    }
    let stability = (users > 0).then(|| Computed::number(percent(free, users), n));
    let crash_rate = (sessions > 0).then(|| Computed::number(percent(crashed, sessions), n));
    (stability, crash_rate)
}

/// Indices of the latest snapshot of every issue taken at or before `as_of`.
pub fn latest_snapshot_indices(issues: &[&IssueEvent], as_of: Timestamp) -> Vec<usize> {
    let mut latest: BTreeMap<&str, usize> = BTreeMap::new();
    for (idx, i) in issues.iter().enumerate() {
        if i.snapshot_at > as_of {
            continue;
        }
        latest
            .entry(i.issue_id.as_str())
            .and_modify(|cur| {
                if i.snapshot_at >= issues[*cur].snapshot_at {
                    *cur = idx;
                }
            })
            .or_insert(idx);
    }
    latest.into_values().collect()
}

/// Latest snapshot of every issue taken at or before `as_of`.
pub fn latest_snapshots<'a>(issues: &[&'a IssueEvent], as_of: Timestamp) -> Vec<&'a IssueEvent> {
    latest_snapshot_indices(issues, as_of)
        .into_iter()
        .map(|i| issues[i])
        .collect()
}

pub fn is_open_bug(i: &IssueEvent) -> bool {
    i.kind == IssueKind::Bug && i.status == IssueStatus::Open
}

pub fn selects_blocker_critical(i: &IssueEvent) -> bool {
    is_open_bug(i) && matches!(i.priority, IssuePriority::Blocker | IssuePriority::Critical)
}

/// Open bugs of blocker or critical priority as of `as_of`.
pub fn blocker_critical_open(issues: &[&IssueEvent], as_of: Timestamp) -> Computed {
    let n = latest_snapshots(issues, as_of)
        .into_iter()
        .filter(|i| selects_blocker_critical(i))
        .count() as u64;
    Computed::number(n as f64, n)
}

/// Open bugs per priority as of `as_of`; every priority is present.
pub fn bug_mix(issues: &[&IssueEvent], as_of: Timestamp) -> Computed {
    let mut dist: BTreeMap<String, u64> = IssuePriority::ALL
        .iter()
        .map(|p| (p.as_str().to_string(), 0))
        .collect();
    let mut n = 0;
    for i in latest_snapshots(issues, as_of).into_iter().filter(|i| is_open_bug(i)) {
        *dist.get_mut(i.priority.as_str()).expect("all priorities seeded") += 1;
        n += 1;
    }
    Computed {
        value: MetricValue::Distribution(dist),
        sample_size: n,
        extras: BTreeMap::new(),
    }
}

/// Testable issues (those carrying an automation status) per status.
pub fn automation_status(issues: &[&IssueEvent], as_of: Timestamp) -> Computed {
    let (mut tba, mut auto, mut cant) = (0u64, 0u64, 0u64);
    for i in latest_snapshots(issues, as_of) {
        match i.automation_status {
            Some(AutomationStatus::ToBeAutomated) => tba += 1,
            Some(AutomationStatus::Automated) => auto += 1,
            Some(AutomationStatus::CannotAutomate) => cant += 1,
            None => {}
        }
    }
    Computed {
        value: MetricValue::StatusTriple {
            to_be_automated: tba,
            automated: auto,
            cannot_automate: cant,
        },
        sample_size: tba + auto + cant,
        extras: BTreeMap::new(),
    }
}

/// Successful deployments scaled to a per-week rate.
pub fn deployment_frequency(deployments: &[&DeploymentEvent], window: &TimeWindow) -> Computed {
    let n = deployments
        .iter()
        .filter(|d| selects_successful_deployment(d, window))
        .count() as u64;
    Computed::number(per_week(n, window), n)
}

/// Percent of main-branch builds that failed.
pub fn main_fail_rate(builds: &[&BuildEvent], window: &TimeWindow) -> Option<Computed> {
    let (mut total, mut failed) = (0u64, 0u64);
    for b in builds.iter().filter(|b| selects_main_build(b, window)) {
        total += 1;
        if b.outcome == BuildOutcome::Failure {
            failed += 1;
        }
    }
    (total > 0).then(|| Computed::number(percent(failed, total), total))
}

/// Mean hours from trigger to completion over successful builds.
pub fn avg_turnaround_time(builds: &[&BuildEvent], window: &TimeWindow) -> Option<Computed> {
    let samples: Vec<f64> = builds
        .iter()
        .filter(|b| selects_successful_build(b, window))
        .map(|b| hours(b.finished_at - b.triggered_at))
        .collect();
    if samples.is_empty() {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Some(Computed::number(mean, samples.len() as u64))
}

/// Indices of the latest coverage measurement per platform within `window`.
pub fn latest_coverage(coverage: &[&CoverageEvent], window: &TimeWindow) -> Vec<usize> {
    let mut latest: BTreeMap<&Platform, usize> = BTreeMap::new();
    for (i, c) in coverage.iter().enumerate() {
        if !window.contains(c.measured_at) {
            continue;
        }
        latest
            .entry(&c.platform)
            .and_modify(|cur| {
                if c.measured_at >= coverage[*cur].measured_at {
                    *cur = i;
                }
            })
            .or_insert(i);
    }
    latest.into_values().collect()
}

/// Statement coverage from the latest measurement in `window` (per platform
/// when the scope spans several).
pub fn automation_coverage(coverage: &[&CoverageEvent], window: &TimeWindow) -> Option<Computed> {
    let picked = latest_coverage(coverage, window);
    let total: u64 = picked.iter().map(|&i| coverage[i].statements_total).sum();
    let covered: u64 = picked.iter().map(|&i| coverage[i].statements_covered).sum();
    (total > 0).then(|| Computed::number(percent(covered, total), picked.len() as u64))
}

/// Percent of automated test suites that passed.
pub fn automation_health(runs: &[&TestSuiteRunEvent], window: &TimeWindow) -> Option<Computed> {
    let (mut total, mut passed, mut n) = (0u64, 0u64, 0u64);
    for r in runs.iter().filter(|r| window.contains(r.ran_at)) {
        total += r.suites_total;
        passed += r.suites_passed;
        n += 1;
    }
    (total > 0).then(|| Computed::number(percent(passed, total), n))
}

/// Rolling-MAU parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RollingMauConfig {
    /// Trailing months averaged, including the current one.
    pub window_months: u32,
    /// Reference month for the index; defaults to the first month on record.
    pub baseline: Option<YearMonth>,
}

impl Default for RollingMauConfig {
    fn default() -> Self {
        Self {
            window_months: 3,
            baseline: None,
        }
    }
}

/// Monthly active users per month of the scope (summed over platforms).
pub fn mau_series(usage: &[&UsageStatsEvent]) -> BTreeMap<YearMonth, u64> {
    let mut series = BTreeMap::new();
    for u in usage {
        *series.entry(u.month).or_insert(0) += u.active_users;
    }
    series
}

/// Months whose records feed the rolling index for `month`: the trailing
/// months that have data, plus the baseline.
pub fn rolling_months(
    series: &BTreeMap<YearMonth, u64>,
    month: YearMonth,
    cfg: RollingMauConfig,
) -> (Vec<YearMonth>, Option<YearMonth>) {
    let trailing = (0..cfg.window_months.max(1) as i32)
        .map(|k| month.minus(k))
        .filter(|m| series.contains_key(m))
        .collect();
    let baseline = cfg.baseline.or_else(|| series.keys().next().copied());
    (trailing, baseline)
}

/// `(MAU, rolling MAU %)` for `month`. The rolling figure is the trailing
/// mean of MAU over the available months of the configured span, indexed
/// against the baseline month's MAU (= 100).
pub fn mau_and_rolling(
    usage: &[&UsageStatsEvent],
    month: YearMonth,
    cfg: RollingMauConfig,
) -> (Option<Computed>, Option<Computed>) {
    let series = mau_series(usage);
    let Some(&current) = series.get(&month) else {
        return (None, None);
    };
    let records_this_month = usage.iter().filter(|u| u.month == month).count() as u64;
    let mau = Computed::number(current as f64, records_this_month);

    let (trailing, baseline) = rolling_months(&series, month, cfg);
    let rolling = baseline
        .and_then(|b| series.get(&b).copied())
        .filter(|&b| b > 0)
        .map(|base| {
            let mean = trailing.iter().map(|m| series[m] as f64).sum::<f64>()
                / trailing.len() as f64;
            Computed::number(100.0 * mean / base as f64, trailing.len() as u64)
        });
    (Some(mau), rolling)
}
