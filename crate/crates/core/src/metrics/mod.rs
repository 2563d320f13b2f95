//! Metrics engine: turns the raw namespace into metric points.
//!
//! Processing is a pure function of a raw snapshot and a
//! [`ComputationRequest`]. Every point of one run is stamped with the same
//! `computed-at`, the newest `fetched-at` in the snapshot, so reprocessing an
//! unchanged raw namespace reproduces the processed namespace exactly.

pub mod catalog;
pub mod compute;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::domain::{
    standardize_user_id, AssistantUsageEvent, BuildEvent, BuildOutcome, CommitEvent,
    CoverageEvent, DeploymentEvent, EngineeringEvent, IssueEvent, MetricId, PlatformSet,
    PullRequestEvent, Scope, SessionStatsEvent, TestSuiteRunEvent, TimeWindow, Timestamp,
    UsageStatsEvent, WindowGranularity, YearMonth,
};
use crate::storage::{MetricPoint, RawSnapshot, Store, StoreError, UpsertOutcome};

pub use compute::{Computed, RollingMauConfig};

/// Where an event came from: one version of one raw record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Origin {
    pub source_id: String,
    pub natural_key: String,
    /// Index into the record's version list, oldest first.
    pub version: usize,
}

#[derive(Debug, Clone)]
pub struct Tagged<T> {
    pub origin: Origin,
    pub event: T,
}

/// Decoded, de-duplicated events of a raw snapshot.
///
/// Issues keep every snapshot version (they feed as-of metrics); all other
/// kinds keep the newest version per natural key. The same natural key
/// arriving through two sources is counted once.
#[derive(Debug, Clone, Default)]
pub struct EventSet {
    pub commits: Vec<Tagged<CommitEvent>>,
    pub pull_requests: Vec<Tagged<PullRequestEvent>>,
    pub builds: Vec<Tagged<BuildEvent>>,
    pub deployments: Vec<Tagged<DeploymentEvent>>,
    pub issues: Vec<Tagged<IssueEvent>>,
    pub sessions: Vec<Tagged<SessionStatsEvent>>,
    pub test_runs: Vec<Tagged<TestSuiteRunEvent>>,
    pub coverage: Vec<Tagged<CoverageEvent>>,
    pub usage: Vec<Tagged<UsageStatsEvent>>,
    pub assistant: Vec<Tagged<AssistantUsageEvent>>,
    /// Raw records holding opaque blobs.
    pub blobs: usize,
    /// Raw objects that no longer decode (e.g. a platform was removed).
    pub undecodable: usize,
}

impl EventSet {
    pub fn from_snapshot(snapshot: &RawSnapshot, platforms: &PlatformSet) -> Self {
        let mut set = EventSet::default();
        let mut picked: BTreeMap<String, (Timestamp, Origin, EngineeringEvent)> = BTreeMap::new();
        let mut consider = |key: String, fetched: Timestamp, origin: Origin, ev: EngineeringEvent| {
            match picked.get(&key) {
                Some((at, _, _)) if *at > fetched => {}
                _ => {
                    picked.insert(key, (fetched, origin, ev));
                }
            }
        };
        for versions in &snapshot.versions {
            let Some(last) = versions.last() else { continue };
            if last.is_blob() {
                set.blobs += 1;
                continue;
            }
            let decode = |idx: usize| {
                EngineeringEvent::from_value(versions[idx].payload.clone(), platforms).ok()
            };
            let last_idx = versions.len() - 1;
            let Some(event) = decode(last_idx) else {
                set.undecodable += 1;
                continue;
            };
            let origin = |version: usize| Origin {
                source_id: last.source_id.clone(),
                natural_key: last.natural_key.clone(),
                version,
            };
            if let EngineeringEvent::Issue(_) = event {
                for idx in 0..versions.len() {
                    match decode(idx) {
                        Some(EngineeringEvent::Issue(i)) => {
                            let key = format!("issue:{}@{}", i.issue_id, i.snapshot_at.to_rfc3339());
                            consider(key, versions[idx].fetched_at, origin(idx), EngineeringEvent::Issue(i));
                        }
                        _ => set.undecodable += 1,
                    }
                }
            } else {
                consider(event.natural_key(), last.fetched_at, origin(last_idx), event);
            }
        }
        for (_, (_, origin, event)) in picked {
            set.push(origin, event);
        }
        set
    }

    /// Wraps in-memory events; each gets a synthetic origin under
    /// `source_id`. Duplicates by natural key keep the last occurrence.
    pub fn from_events(source_id: &str, events: impl IntoIterator<Item = EngineeringEvent>) -> Self {
        let mut picked = BTreeMap::new();
        for event in events {
            let key = match &event {
                EngineeringEvent::Issue(i) => {
                    format!("issue:{}@{}", i.issue_id, i.snapshot_at.to_rfc3339())
                }
                other => other.natural_key(),
            };
            picked.insert(key, event);
        }
        let mut set = EventSet::default();
        for (key, event) in picked {
            let origin = Origin {
                source_id: source_id.to_string(),
                natural_key: key,
                version: 0,
            };
            set.push(origin, event);
        }
        set
    }

    fn push(&mut self, origin: Origin, event: EngineeringEvent) {
        macro_rules! put {
            ($field:ident, $e:expr) => {
                self.$field.push(Tagged { origin, event: $e })
            };
        }
        match event {
            EngineeringEvent::Commit(e) => put!(commits, e),
            EngineeringEvent::PullRequest(e) => put!(pull_requests, e),
            EngineeringEvent::Build(e) => put!(builds, e),
            EngineeringEvent::Deployment(e) => put!(deployments, e),
            EngineeringEvent::Issue(e) => put!(issues, e),
            EngineeringEvent::SessionStats(e) => put!(sessions, e),
            EngineeringEvent::TestSuiteRun(e) => put!(test_runs, e),
            EngineeringEvent::Coverage(e) => put!(coverage, e),
            EngineeringEvent::UsageStats(e) => put!(usage, e),
            EngineeringEvent::AssistantUsage(e) => put!(assistant, e),
        }
    }

    pub fn len(&self) -> usize {
        self.commits.len()
            + self.pull_requests.len()
            + self.builds.len()
            + self.deployments.len()
            + self.issues.len()
            + self.sessions.len()
            + self.test_runs.len()
            + self.coverage.len()
            + self.usage.len()
            + self.assistant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Earliest and latest event time across the set.
    pub fn time_extent(&self) -> Option<(Timestamp, Timestamp)> {
        let mut times = Vec::new();
        times.extend(self.commits.iter().map(|t| t.event.committed_at));
        for t in &self.pull_requests {
            times.push(t.event.created_at);
            times.extend(t.event.merged_at);
        }
        times.extend(self.builds.iter().map(|t| t.event.finished_at));
        times.extend(self.deployments.iter().map(|t| t.event.deployed_at));
        times.extend(self.issues.iter().map(|t| t.event.snapshot_at));
        let midnight = |d: chrono::NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        times.extend(self.sessions.iter().map(|t| midnight(t.event.day)));
        times.extend(self.test_runs.iter().map(|t| t.event.ran_at));
        times.extend(self.coverage.iter().map(|t| t.event.measured_at));
        times.extend(self.usage.iter().map(|t| t.event.month.start()));
        times.extend(self.assistant.iter().map(|t| midnight(t.event.day)));
        let min = times.iter().min()?;
        let max = times.iter().max()?;
        Some((*min, *max))
    }

    /// Standardized ids of everyone who authored a commit or PR.
    pub fn authors(&self) -> BTreeSet<String> {
        self.commits
            .iter()
            .map(|t| t.event.author_id.as_str())
            .chain(self.pull_requests.iter().map(|t| t.event.author_id.as_str()))
            .filter_map(|a| standardize_user_id(a).ok())
            .collect()
    }

    /// Team scopes that appear on pull requests.
    pub fn team_scopes(&self) -> BTreeSet<Scope> {
        self.pull_requests
            .iter()
            .filter_map(|t| Scope::team(t.event.platform.clone(), t.event.team.clone()).ok())
            .collect()
    }

    /// The events admitted by `scope`.
    pub fn view(&self, scope: &Scope) -> ScopedView<'_> {
        fn pick<'a, T>(
            items: &'a [Tagged<T>],
            admit: impl Fn(&T) -> bool,
        ) -> Slice<'a, T> {
            let mut s = Slice {
                events: Vec::new(),
                origins: Vec::new(),
            };
            for t in items.iter().filter(|t| admit(&t.event)) {
                s.events.push(&t.event);
                s.origins.push(&t.origin);
            }
            s
        }
        // Only pull requests carry a team; other kinds never fall into a
        // team scope.
        let untagged = |p: &crate::domain::Platform| scope.admits(p, None) && scope.team_label().is_none();
        ScopedView {
            commits: pick(&self.commits, |e| untagged(&e.platform)),
            pull_requests: pick(&self.pull_requests, |e| {
                scope.admits(&e.platform, Some(&e.team))
            }),
            builds: pick(&self.builds, |e| untagged(&e.platform)),
            deployments: pick(&self.deployments, |e| untagged(&e.platform)),
            issues: pick(&self.issues, |e| untagged(&e.platform)),
            sessions: pick(&self.sessions, |e| untagged(&e.platform)),
            test_runs: pick(&self.test_runs, |e| untagged(&e.platform)),
            coverage: pick(&self.coverage, |e| untagged(&e.platform)),
            usage: pick(&self.usage, |e| untagged(&e.platform)),
            assistant: pick(&self.assistant, |e| untagged(&e.platform)),
        }
    }
}

/// Events of one kind admitted by a scope, with their origins alongside.
#[derive(Debug)]
pub struct Slice<'a, T> {
    pub events: Vec<&'a T>,
    pub origins: Vec<&'a Origin>,
}

#[derive(Debug)]
pub struct ScopedView<'a> {
    pub commits: Slice<'a, CommitEvent>,
    pub pull_requests: Slice<'a, PullRequestEvent>,
    pub builds: Slice<'a, BuildEvent>,
    pub deployments: Slice<'a, DeploymentEvent>,
    pub issues: Slice<'a, IssueEvent>,
    pub sessions: Slice<'a, SessionStatsEvent>,
    pub test_runs: Slice<'a, TestSuiteRunEvent>,
    pub coverage: Slice<'a, CoverageEvent>,
    pub usage: Slice<'a, UsageStatsEvent>,
    pub assistant: Slice<'a, AssistantUsageEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Branch names counted by commit-frequency.
    pub main_branches: Vec<String>,
    pub rolling_mau: RollingMauConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            main_branches: vec!["main".to_string()],
            rolling_mau: RollingMauConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Sequential,
    /// Data-parallel over computation tasks. Without the `parallel` feature
    /// this runs sequentially.
    Parallel,
}

impl Default for ExecutionMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecutionMode::Parallel
        } else {
            ExecutionMode::Sequential
        }
    }
}

fn map_ordered<T, R, F>(mode: ExecutionMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecutionMode::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("computation request has no {0}")]
    Empty(&'static str),
}

/// Which `(metric, scope, window)` cells to compute.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationRequest {
    metrics: Vec<MetricId>,
    scopes: Vec<Scope>,
    windows: Vec<TimeWindow>,
}

impl ComputationRequest {
    pub fn new(
        metrics: impl IntoIterator<Item = MetricId>,
        scopes: impl IntoIterator<Item = Scope>,
        windows: impl IntoIterator<Item = TimeWindow>,
    ) -> Result<Self, RequestError> {
        let metrics: BTreeSet<MetricId> = metrics.into_iter().collect();
        let scopes: BTreeSet<Scope> = scopes.into_iter().collect();
        let mut windows: Vec<TimeWindow> = windows.into_iter().collect();
        windows.sort_by_key(|w| (w.granularity(), w.start()));
        windows.dedup();
        if metrics.is_empty() {
            return Err(RequestError::Empty("metrics"));
        }
        if scopes.is_empty() {
            return Err(RequestError::Empty("scopes"));
        }
        if windows.is_empty() {
            return Err(RequestError::Empty("windows"));
        }
        Ok(Self {
            metrics: metrics.into_iter().collect(),
            scopes: scopes.into_iter().collect(),
            windows,
        })
    }

    /// Every metric, the org, each platform and each team seen in `events`,
    /// over the windows of `granularities` covering `[from, to)`.
    pub fn covering(
        events: &EventSet,
        platforms: &PlatformSet,
        from: Timestamp,
        to: Timestamp,
        granularities: &[WindowGranularity],
    ) -> Result<Self, RequestError> {
        let windows = granularities
            .iter()
            .flat_map(|g| TimeWindow::covering(from, to, *g));
        Self::new(MetricId::ALL, default_scopes(events, platforms), windows)
    }

    /// Like [`ComputationRequest::covering`] over the whole time extent of
    /// `events`. `None` when there are no events.
    pub fn for_events(
        events: &EventSet,
        platforms: &PlatformSet,
        granularities: &[WindowGranularity],
    ) -> Option<Self> {
        let (from, to) = events.time_extent()?;
        let to = to + chrono::Duration::nanoseconds(1);
        Self::covering(events, platforms, from, to, granularities).ok()
    }

    pub fn metrics(&self) -> &[MetricId] {
        &self.metrics
    }

    pub fn scopes(&self) -> &[Scope] {
        &self.scopes
    }

    pub fn windows(&self) -> &[TimeWindow] {
        &self.windows
    }
}

pub fn default_scopes(events: &EventSet, platforms: &PlatformSet) -> BTreeSet<Scope> {
    let mut scopes: BTreeSet<Scope> = BTreeSet::from([Scope::Org]);
    scopes.extend(platforms.iter().cloned().map(Scope::Platform));
    scopes.extend(
        events
            .team_scopes()
            .into_iter()
            .filter(|s| s.platform().is_some_and(|p| platforms.contains(p))),
    );
    scopes
}

/// Whether `metric` is defined for `scope` and `window` at all.
pub fn applicable(metric: MetricId, scope: &Scope, window: &TimeWindow) -> bool {
    if scope.team_label().is_some() && !metric.supports_team_scope() {
        return false;
    }
    match metric {
        MetricId::Mau | MetricId::RollingMau => window.granularity() == WindowGranularity::Monthly,
        _ => true,
    }
}

/// Points of one evaluation plus the scopes withheld from it.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub points: Vec<MetricPoint>,
    /// Team scopes not computed because they would single out one person.
    pub suppressed: Vec<Scope>,
}

#[derive(Debug, Clone, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProcessingReport {
    pub computed_at: Option<Timestamp>,
    pub points: usize,
    pub inserted: usize,
    pub replaced: usize,
    pub unchanged: usize,
    pub blobs_skipped: usize,
    pub undecodable: usize,
    pub suppressed_scopes: Vec<Scope>,
    /// Points that were inserted or replaced by this run.
    #[serde(skip)]
    pub changed: Vec<MetricPoint>,
}

/// One record contributing to a metric point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Contribution {
    pub origin: Origin,
    /// The record represents the adverse outcome the metric tracks, e.g. a
    /// failed build for main-fail-rate.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    platforms: PlatformSet,
    mode: ExecutionMode,
}

impl Engine {
    pub fn new(config: EngineConfig, platforms: PlatformSet) -> Self {
        Self {
            config,
            platforms,
            mode: ExecutionMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: ExecutionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn platforms(&self) -> &PlatformSet {
        &self.platforms
    }

    pub fn mode(&self) -> ExecutionMode {
        self.mode
    }

    /// Value of one cell, or `None` when the metric is undefined for it.
    pub fn compute(&self, metric: MetricId, view: &ScopedView<'_>, window: &TimeWindow) -> Option<Computed> {
        use compute as c;
        let w = window;
        match metric {
            MetricId::LeadTimeForChanges => {
                c::lead_time_for_changes(&view.commits.events, &view.deployments.events, w)
            }
            MetricId::PrCycleTime => c::pr_cycle_time(&view.pull_requests.events, w),
            MetricId::CommitFrequency => {
                c::commit_frequency(&view.commits.events, w, &self.config.main_branches)
            }
            MetricId::BuildInducedLatency => c::build_induced_latency(&view.builds.events, w),
            MetricId::PrThroughput => Some(c::pr_throughput(&view.pull_requests.events, w)),
            MetricId::CopilotAcceptanceRate => {
                c::copilot_acceptance_rate(&view.assistant.events, w)
            }
            MetricId::Stability => c::stability_and_crash_rate(&view.sessions.events, w).0,
            MetricId::UserCrashRate => c::stability_and_crash_rate(&view.sessions.events, w).1,
            MetricId::BlockerCriticalOpen => {
                Some(c::blocker_critical_open(&view.issues.events, c::as_of(w)))
            }
            MetricId::BugMix => Some(c::bug_mix(&view.issues.events, c::as_of(w))),
            MetricId::AutomationStatus => {
                Some(c::automation_status(&view.issues.events, c::as_of(w)))
            }
            MetricId::DeploymentFrequency => {
                Some(c::deployment_frequency(&view.deployments.events, w))
            }
            MetricId::MainFailRate => c::main_fail_rate(&view.builds.events, w),
            MetricId::AvgTurnaroundTime => c::avg_turnaround_time(&view.builds.events, w),
            MetricId::AutomationCoverage => c::automation_coverage(&view.coverage.events, w),
            MetricId::AutomationHealth => c::automation_health(&view.test_runs.events, w),
            MetricId::Mau => {
                c::mau_and_rolling(&view.usage.events, w.month(), self.config.rolling_mau).0
            }
            MetricId::RollingMau => {
                c::mau_and_rolling(&view.usage.events, w.month(), self.config.rolling_mau).1
            }
        }
    }

    /// Computes every applicable cell of `request`. Output order follows the
    /// request (scope, window, metric) in both execution modes.
    pub fn evaluate(
        &self,
        events: &EventSet,
        request: &ComputationRequest,
        computed_at: Timestamp,
    ) -> Evaluation {
        let authors = events.authors();
        let (scopes, suppressed): (Vec<&Scope>, Vec<&Scope>) =
            request.scopes().iter().partition(|s| {
                s.team_label()
                    .and_then(|t| standardize_user_id(t).ok())
                    .is_none_or(|t| !authors.contains(&t))
            });
        let views: Vec<(&Scope, ScopedView<'_>)> = scopes.iter().map(|s| (*s, events.view(s))).collect();

        let mut tasks = Vec::new();
        for (vi, (scope, _)) in views.iter().enumerate() {
            for window in request.windows() {
                for &metric in request.metrics() {
                    if applicable(metric, scope, window) {
                        tasks.push((vi, window, metric));
                    }
                }
            }
        }
        let points = map_ordered(self.mode, &tasks, |&(vi, window, metric)| {
            let (scope, view) = &views[vi];
            self.compute(metric, view, window).map(|c| MetricPoint {
                metric_id: metric,
                scope: (*scope).clone(),
                window: window.clone(),
                value: c.value,
                computed_at,
                sample_size: c.sample_size,
                extras: c.extras,
            })
        });
        Evaluation {
            points: points.into_iter().flatten().collect(),
            suppressed: suppressed.into_iter().cloned().collect(),
        }
    }

    /// Snapshots the raw namespace, computes `request` (or everything the
    /// raw data covers when `None`) and upserts the points.
    pub fn process(
        &self,
        store: &Store,
        request: Option<&ComputationRequest>,
        granularities: &[WindowGranularity],
    ) -> Result<ProcessingReport, StoreError> {
        let snapshot = store.snapshot_raw();
        let events = EventSet::from_snapshot(&snapshot, &self.platforms);
        let mut report = ProcessingReport {
            computed_at: snapshot.high_water_mark(),
            blobs_skipped: events.blobs,
            undecodable: events.undecodable,
            ..Default::default()
        };
        let Some(computed_at) = report.computed_at else {
            return Ok(report);
        };
        let derived;
        let request = match request {
            Some(r) => r,
            None => match ComputationRequest::for_events(&events, &self.platforms, granularities) {
                Some(r) => {
                    derived = r;
                    &derived
                }
                None => return Ok(report),
            },
        };
        let evaluation = self.evaluate(&events, request, computed_at);
        report.suppressed_scopes = evaluation.suppressed;
        for point in evaluation.points {
            report.points += 1;
            match store.upsert_metric(point.clone())? {
                UpsertOutcome::Inserted => {
                    report.inserted += 1;
                    report.changed.push(point);
                }
                UpsertOutcome::Replaced => {
                    report.replaced += 1;
                    report.changed.push(point);
                }
                UpsertOutcome::Unchanged => report.unchanged += 1,
            }
        }
        store.compact_processed()?;
        log::info!(
            "processed {} points ({} new, {} replaced, {} unchanged)",
            report.points,
            report.inserted,
            report.replaced,
            report.unchanged
        );
        Ok(report)
    }

    /// Records contributing to the cell `(metric, scope, window)`.
    /// Recomputing the metric from exactly these records yields the same
    /// value.
    pub fn contributors(
        &self,
        metric: MetricId,
        events: &EventSet,
        scope: &Scope,
        window: &TimeWindow,
    ) -> Vec<Contribution> {
        use compute as c;
        let v = events.view(scope);
        let w = window;
        let mut out: Vec<Contribution> = Vec::new();
        fn add<T>(
            out: &mut Vec<Contribution>,
            slice: &Slice<'_, T>,
            keep: impl Fn(&T) -> bool,
            flag: impl Fn(&T) -> bool,
        ) {
            for (e, o) in slice.events.iter().zip(&slice.origins) {
                if keep(e) {
                    out.push(Contribution {
                        origin: (*o).clone(),
                        flagged: flag(e),
                    });
                }
            }
        }
        fn add_indices<T>(out: &mut Vec<Contribution>, slice: &Slice<'_, T>, idx: &[usize]) {
            for &i in idx {
                out.push(Contribution {
                    origin: slice.origins[i].clone(),
                    flagged: false,
                });
            }
        }
        fn never<T>(_: &T) -> bool {
            false
        }
        match metric {
            MetricId::LeadTimeForChanges => {
                let pairs = c::first_deliveries(&v.commits.events, &v.deployments.events, w);
                let commits: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
                let deploys: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
                add_indices(&mut out, &v.commits, &commits.into_iter().collect::<Vec<_>>());
                add_indices(&mut out, &v.deployments, &deploys.into_iter().collect::<Vec<_>>());
            }
            MetricId::PrCycleTime | MetricId::PrThroughput => {
                add(&mut out, &v.pull_requests, |e| c::selects_pr_merge(e, w), never)
            }
            MetricId::CommitFrequency => add(
                &mut out,
                &v.commits,
                |e| c::selects_main_commit(e, w, &self.config.main_branches),
                never,
            ),
            MetricId::BuildInducedLatency => {
                add(&mut out, &v.builds, |e| c::selects_feedback_build(e, w), never)
            }
            MetricId::CopilotAcceptanceRate => {
                add(&mut out, &v.assistant, |e| c::selects_day(e.day, w), never)
            }
            MetricId::Stability => add(&mut out, &v.sessions, |e| c::selects_day(e.day, w), |e| {
                e.crash_free_users < e.total_users
            }),
            MetricId::UserCrashRate => {
                add(&mut out, &v.sessions, |e| c::selects_day(e.day, w), |e| e.crashed_sessions > 0)
            }
            MetricId::BlockerCriticalOpen | MetricId::BugMix | MetricId::AutomationStatus => {
                let latest = c::latest_snapshot_indices(&v.issues.events, c::as_of(w));
                let keep: Vec<usize> = latest
                    .into_iter()
                    .filter(|&i| {
                        let e = v.issues.events[i];
                        match metric {
                            MetricId::BlockerCriticalOpen => c::selects_blocker_critical(e),
                            MetricId::BugMix => c::is_open_bug(e),
                            _ => e.automation_status.is_some(),
                        }
                    })
                    .collect();
                add_indices(&mut out, &v.issues, &keep);
            }
            MetricId::DeploymentFrequency => add(
                &mut out,
                &v.deployments,
                |e| c::selects_successful_deployment(e, w),
                never,
            ),
            MetricId::MainFailRate => add(
                &mut out,
                &v.builds,
                |e| c::selects_main_build(e, w),
                |e| e.outcome == BuildOutcome::Failure,
            ),
            MetricId::AvgTurnaroundTime => {
                add(&mut out, &v.builds, |e| c::selects_successful_build(e, w), never)
            }
            MetricId::AutomationCoverage => {
                let idx = c::latest_coverage(&v.coverage.events, w);
                add_indices(&mut out, &v.coverage, &idx);
            }
            MetricId::AutomationHealth => add(
                &mut out,
                &v.test_runs,
                |e| w.contains(e.ran_at),
                |e| e.suites_passed < e.suites_total,
            ),
            MetricId::Mau => {
                let month = w.month();
                add(&mut out, &v.usage, |e| e.month == month, never)
            }
            MetricId::RollingMau => {
                let series = c::mau_series(&v.usage.events);
                let (trailing, baseline) =
                    c::rolling_months(&series, w.month(), self.config.rolling_mau);
                let months: BTreeSet<YearMonth> = trailing.into_iter().chain(baseline).collect();
                add(&mut out, &v.usage, |e| months.contains(&e.month), never)
            }
        }
        out.sort_by(|a, b| a.origin.cmp(&b.origin));
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{window_for, Platform, PrState};
    use crate::storage::RawRecord;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn platforms() -> PlatformSet {
        PlatformSet::new(["android", "ios"]).unwrap()
    }

    fn pr(id: &str, platform: &str, team: &str, author: &str, merged: &str) -> EngineeringEvent {
        EngineeringEvent::PullRequest(PullRequestEvent {
            pr_id: id.into(),
            author_id: author.into(),
            team: team.into(),
            platform: Platform::new(platform).unwrap(),
            created_at: ts("2024-03-04T00:00:00Z"),
            merged_at: Some(ts(merged)),
            state: PrState::Merged,
        })
    }

    fn raw(source: &str, event: &EngineeringEvent, fetched: &str) -> RawRecord {
        RawRecord {
            source_id: source.into(),
            natural_key: event.natural_key(),
            fetched_at: ts(fetched),
            payload: event.to_canonical_value(),
        }
    }

    #[test]
    fn snapshot_decoding_dedupes_and_counts_blobs() {
        let store = Store::in_memory();
        let a = pr("1", "android", "core", "ann", "2024-03-04T10:00:00Z");
        store.append_raw(raw("git", &a, "2024-03-05T00:00:00Z")).unwrap();
        store.append_raw(raw("ingest", &a, "2024-03-06T00:00:00Z")).unwrap();
        store
            .append_raw(RawRecord {
                source_id: "git".into(),
                natural_key: "blob:abc".into(),
                fetched_at: ts("2024-03-05T00:00:00Z"),
                payload: serde_json::Value::String("garbage".into()),
            })
            .unwrap();
        let set = EventSet::from_snapshot(&store.snapshot_raw(), &platforms());
        assert_eq!(set.pull_requests.len(), 1);
        assert_eq!(set.pull_requests[0].origin.source_id, "ingest");
        assert_eq!(set.blobs, 1);

        // a platform dropped from configuration leaves records undecodable
        let only_ios = PlatformSet::new(["ios"]).unwrap();
        let set = EventSet::from_snapshot(&store.snapshot_raw(), &only_ios);
        assert_eq!(set.undecodable, 2);
        assert!(set.is_empty());
    }

    #[test]
    fn team_scopes_and_suppression() {
        let set = EventSet::from_events(
            "mem",
            [
                pr("1", "android", "core", "ann", "2024-03-04T10:00:00Z"),
                pr("2", "android", "bob", "Bob@corp.com", "2024-03-04T11:00:00Z"),
            ],
        );
        let engine = Engine::new(EngineConfig::default(), platforms());
        let request =
            ComputationRequest::for_events(&set, &platforms(), &[WindowGranularity::Daily]).unwrap();
        assert!(request.scopes().contains(&"android/core".parse().unwrap()));
        let eval = engine.evaluate(&set, &request, ts("2024-03-05T00:00:00Z"));
        assert_eq!(eval.suppressed, vec!["android/bob".parse::<Scope>().unwrap()]);
        assert!(eval.points.iter().all(|p| p.scope.team_label() != Some("bob")));
        let core: Vec<_> = eval
            .points
            .iter()
            .filter(|p| p.scope.team_label() == Some("core"))
            .map(|p| p.metric_id)
            .collect();
        assert_eq!(core, vec![MetricId::PrCycleTime, MetricId::PrThroughput]);
    }

    #[test]
    fn evaluation_is_mode_independent() {
        let events: Vec<_> = (0..40)
            .map(|i| {
                pr(
                    &i.to_string(),
                    if i % 2 == 0 { "android" } else { "ios" },
                    "core",
                    "ann",
                    &format!("2024-03-{:02}T10:00:00Z", 4 + i % 10),
                )
            })
            .collect();
        let set = EventSet::from_events("mem", events);
        let request = ComputationRequest::for_events(
            &set,
            &platforms(),
            &[WindowGranularity::Daily, WindowGranularity::Weekly],
        )
        .unwrap();
        let at = ts("2024-04-01T00:00:00Z");
        let engine = Engine::new(EngineConfig::default(), platforms());
        let seq = engine.clone().with_mode(ExecutionMode::Sequential).evaluate(&set, &request, at);
        let par = engine.with_mode(ExecutionMode::Parallel).evaluate(&set, &request, at);
        assert!(!seq.points.is_empty());
        assert_eq!(seq.points, par.points);
    }

    #[test]
    fn processing_empty_store_is_a_no_op() {
        let store = Store::in_memory();
        let engine = Engine::new(EngineConfig::default(), platforms());
        let report = engine.process(&store, None, &[WindowGranularity::Daily]).unwrap();
        assert_eq!(report.points, 0);
        assert_eq!(store.processed_len(), 0);
    }

    #[test]
    fn contributors_follow_selection() {
        let set = EventSet::from_events(
            "mem",
            [
                pr("1", "android", "core", "ann", "2024-03-04T10:00:00Z"),
                pr("2", "android", "core", "ann", "2024-03-05T10:00:00Z"),
                pr("3", "ios", "core", "ann", "2024-03-04T10:00:00Z"),
            ],
        );
        let engine = Engine::new(EngineConfig::default(), platforms());
        let w = window_for(ts("2024-03-04T00:00:00Z"), WindowGranularity::Daily);
        let got = engine.contributors(MetricId::PrThroughput, &set, &"android".parse().unwrap(), &w);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].origin.natural_key, "pr:1");
        let org = engine.contributors(MetricId::PrThroughput, &set, &Scope::Org, &w);
        assert_eq!(org.len(), 2);
    }
}
