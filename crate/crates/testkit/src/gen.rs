//! Random, schema-valid event sets.
//!
//! Sets are small enough for brute force but dense enough that windows hold
//! several events of each kind. Ids are drawn so that natural keys never
//! collide, which keeps the oracle free of deduplication rules.

use std::collections::{BTreeSet, HashSet};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;

use devpulse_core::domain::{
    AssistantUsageEvent, AutomationStatus, BuildEvent, BuildOutcome, CommitEvent, CoverageEvent,
    DeploymentEvent, EngineeringEvent, IssueEvent, IssueKind, IssuePriority, IssueStatus,
    Platform, PrState, PullRequestEvent, SessionStatsEvent, TestSuiteRunEvent, Timestamp,
    TimeWindow, TriggerKind, UsageStatsEvent, WindowGranularity, YearMonth, window_for,
};

#[derive(Debug, Clone)]
pub struct EventSetParams {
    pub platforms: Vec<String>,
    pub teams: Vec<String>,
    pub start: NaiveDate,
    pub days: i64,
    pub max_events: usize,
}

impl Default for EventSetParams {
    fn default() -> Self {
        Self {
            platforms: vec!["android".into(), "ios".into()],
            teams: vec!["core".into(), "growth".into()],
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            days: 75,
            max_events: 1000,
        }
    }
}

const AUTHOR_FORMS: [&str; 4] = ["Dev{}@Example.com", " dev{} ", "DEV{}@corp.example", "dev{}"];

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    p: &'a EventSetParams,
    next_id: u64,
}

impl<R: Rng> Gen<'_, R> {
    fn id(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}-{}", self.next_id)
    }

    fn platform(&mut self) -> Platform {
        let i = self.rng.random_range(0..self.p.platforms.len());
        Platform::new(self.p.platforms[i].clone()).expect("valid platform")
    }

    fn instant(&mut self) -> Timestamp {
        let base = Utc.from_utc_datetime(&self.p.start.and_hms_opt(0, 0, 0).expect("midnight"));
        base + Duration::seconds(self.rng.random_range(0..self.p.days * 86_400))
    }

    fn day(&mut self) -> NaiveDate {
        self.p.start + Duration::days(self.rng.random_range(0..self.p.days))
    }

    fn author(&mut self) -> String {
        let n = self.rng.random_range(0..6);
        let form = AUTHOR_FORMS[self.rng.random_range(0..AUTHOR_FORMS.len())];
        form.replace("{}", &n.to_string())
    }

    fn hours_after(&mut self, t: Timestamp, max_hours: i64) -> Timestamp {
        t + Duration::seconds(self.rng.random_range(0..=max_hours * 3600))
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.rng.random_range(0..items.len())]
    }
}

/// Up to `params.max_events` events in random order.
pub fn random_event_set<R: Rng>(rng: &mut R, params: &EventSetParams) -> Vec<EngineeringEvent> {
    let target = rng.random_range(1..=params.max_events);
    let mut g = Gen {
        rng,
        p: params,
        next_id: 0,
    };
    let mut out = Vec::with_capacity(target);
    let mut commits: Vec<(Platform, String)> = Vec::new();
    let mut daily_keys: HashSet<(u8, String, NaiveDate)> = HashSet::new();
    let mut monthly_keys: HashSet<(String, YearMonth)> = HashSet::new();
    let mut coverage_keys: HashSet<(String, Timestamp)> = HashSet::new();

    while out.len() < target {
        let roll = g.rng.random_range(0..100);
        match roll {
            0..=17 => {
                let platform = g.platform();
                let commit_id = g.id("c");
                commits.push((platform.clone(), commit_id.clone()));
                let branch = g.pick(&["main", "main", "feature/x", "release"]).to_string();
                out.push(EngineeringEvent::Commit(CommitEvent {
                    commit_id,
                    author_id: g.author(),
                    branch,
                    committed_at: g.instant(),
                    platform,
                }));
            }
            18..=33 => {
                let created_at = g.instant();
                let state = g.pick(&[PrState::Merged, PrState::Merged, PrState::Open, PrState::ClosedUnmerged]);
                let merged_at = (state == PrState::Merged).then(|| g.hours_after(created_at, 200));
                let team = g.p.teams[g.rng.random_range(0..g.p.teams.len())].clone();
                out.push(EngineeringEvent::PullRequest(PullRequestEvent {
                    pr_id: g.id("pr"),
                    author_id: g.author(),
                    team,
                    platform: g.platform(),
                    created_at,
                    merged_at,
                    state,
                }));
            }
            34..=53 => {
                let is_main_branch = g.rng.random_bool(0.5);
                let trigger_kind = g.pick(&[TriggerKind::PrFeedback, TriggerKind::Main, TriggerKind::Release]);
                let triggered_at = g.instant();
                let finished_at = g.hours_after(triggered_at, 3);
                let outcome = if g.rng.random_bool(0.3) { BuildOutcome::Failure } else { BuildOutcome::Success };
                let pr_id = (trigger_kind == TriggerKind::PrFeedback).then(|| g.id("pr-ref"));
                out.push(EngineeringEvent::Build(BuildEvent {
                    build_id: g.id("b"),
                    platform: g.platform(),
                    branch: if is_main_branch { "main".into() } else { "feature/x".into() },
                    is_main_branch,
                    trigger_kind,
                    pr_id,
                    triggered_at,
                    finished_at,
                    outcome,
                }));
            }
            54..=61 => {
                let platform = g.platform();
                let mut commit_ids = BTreeSet::new();
                let same: Vec<&String> =
                    commits.iter().filter(|(p, _)| *p == platform).map(|(_, c)| c).collect();
                for _ in 0..g.rng.random_range(0..6) {
                    if !same.is_empty() {
                        commit_ids.insert(same[g.rng.random_range(0..same.len())].clone());
                    }
                }
                if g.rng.random_bool(0.2) {
                    commit_ids.insert(g.id("c-unknown"));
                }
                if commit_ids.is_empty() {
                    commit_ids.insert(g.id("c-orphan"));
                }
                let outcome = if g.rng.random_bool(0.2) { BuildOutcome::Failure } else { BuildOutcome::Success };
                out.push(EngineeringEvent::Deployment(DeploymentEvent {
                    deploy_id: g.id("d"),
                    platform,
                    deployed_at: g.instant(),
                    commit_ids,
                    outcome,
                }));
            }
            62..=71 => {
                let issue_id = g.id("i");
                let platform = g.platform();
                let kind = g.pick(&[IssueKind::Bug, IssueKind::Bug, IssueKind::Story, IssueKind::Task]);
                let opened_at = g.instant();
                let mut at = opened_at;
                for _ in 0..g.rng.random_range(1..=3) {
                    let status = g.pick(&[IssueStatus::Open, IssueStatus::Closed]);
                    let automation_status = g.pick(&[
                        None,
                        Some(AutomationStatus::ToBeAutomated),
                        Some(AutomationStatus::Automated),
                        Some(AutomationStatus::CannotAutomate),
                    ]);
                    out.push(EngineeringEvent::Issue(IssueEvent {
                        issue_id: issue_id.clone(),
                        platform: platform.clone(),
                        kind,
                        priority: g.pick(&IssuePriority::ALL),
                        status,
                        automation_status,
                        opened_at,
                        closed_at: (status == IssueStatus::Closed).then_some(at),
                        snapshot_at: at,
                    }));
                    at = at + Duration::seconds(g.rng.random_range(1..20 * 86_400));
                }
            }
            72..=79 => {
                let platform = g.platform();
                let day = g.day();
                if !daily_keys.insert((0, platform.to_string(), day)) {
                    continue;
                }
                let total_sessions = g.rng.random_range(0..1000);
                let total_users = g.rng.random_range(0..500);
                out.push(EngineeringEvent::SessionStats(SessionStatsEvent {
                    platform,
                    day,
                    total_sessions,
                    crashed_sessions: g.rng.random_range(0..=total_sessions),
                    total_users,
                    crash_free_users: g.rng.random_range(0..=total_users),
                }));
            }
            80..=85 => {
                let suites_total = g.rng.random_range(0..40);
                out.push(EngineeringEvent::TestSuiteRun(TestSuiteRunEvent {
                    run_id: g.id("t"),
                    platform: g.platform(),
                    ran_at: g.instant(),
                    suites_total,
                    suites_passed: g.rng.random_range(0..=suites_total),
                }));
            }
            86..=90 => {
                let platform = g.platform();
                let measured_at = g.instant();
                if !coverage_keys.insert((platform.to_string(), measured_at)) {
                    continue;
                }
                let statements_total = g.rng.random_range(0..5000);
                out.push(EngineeringEvent::Coverage(CoverageEvent {
                    platform,
                    measured_at,
                    statements_total,
                    statements_covered: g.rng.random_range(0..=statements_total),
                }));
            }
            91..=93 => {
                let platform = g.platform();
                let month = YearMonth::of(g.day());
                if !monthly_keys.insert((platform.to_string(), month)) {
                    continue;
                }
                out.push(EngineeringEvent::UsageStats(UsageStatsEvent {
                    platform,
                    month,
                    active_users: g.rng.random_range(0..5000),
                }));
            }
            _ => {
                let platform = g.platform();
                let day = g.day();
                if !daily_keys.insert((1, platform.to_string(), day)) {
                    continue;
                }
                let shown = g.rng.random_range(0..300);
                let accepted = g.rng.random_range(0..=shown);
                out.push(EngineeringEvent::AssistantUsage(AssistantUsageEvent {
                    platform,
                    day,
                    suggestions_shown: shown,
                    suggestions_accepted: accepted,
                    suggestions_declined: g.rng.random_range(0..=shown - accepted),
                    lines_generated: g.rng.random_range(0..2000),
                }));
            }
        }
    }
    out.truncate(params.max_events);
    out.shuffle(g.rng);
    out
}

/// Every weekly and monthly window over the parameter span plus `daily`
/// randomly chosen days.
pub fn sample_windows<R: Rng>(rng: &mut R, params: &EventSetParams, daily: usize) -> Vec<TimeWindow> {
    let from = Utc.from_utc_datetime(&params.start.and_hms_opt(0, 0, 0).expect("midnight"));
    let to = from + Duration::days(params.days);
    let mut out = TimeWindow::covering(from, to, WindowGranularity::Weekly);
    out.extend(TimeWindow::covering(from, to, WindowGranularity::Monthly));
    for _ in 0..daily {
        let day = from + Duration::days(rng.random_range(0..params.days));
        out.push(window_for(day, WindowGranularity::Daily));
    }
    out.sort_by_key(|w| (w.granularity(), w.start()));
    out.dedup();
    out
}
