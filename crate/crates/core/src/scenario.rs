//! Deterministic synthetic telemetry.
//!
//! A [`ScenarioSpec`] describes a period, the platforms and teams involved
//! and optional disturbances (a CI incident, a crash spike). [`generate`]
//! turns it into the fixture layout read by [`crate::connectors::FixtureConnector`]:
//! `<root>/<source-id>/<date>.jsonl`, each event filed under the date of its
//! event time.
//!
//! Daily main-fail-rate and PR-cycle-time values are realized exactly: the
//! fail rate as `k` failures out of `n` main builds with `100·k/n` equal to
//! the target, the cycle time as three merged PRs per day whose median is
//! the target.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AssistantUsageEvent, AutomationStatus, BuildEvent, BuildOutcome, CommitEvent, CoverageEvent,
    DeploymentEvent, EngineeringEvent, IssueEvent, IssueKind, IssuePriority, IssueStatus,
    Platform, PlatformSet, PrState, PullRequestEvent, Scope, SessionStatsEvent,
    TestSuiteRunEvent, Timestamp, TriggerKind, UsageStatsEvent, YearMonth,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?} (expected steady, incident or crash-spike)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Incident {
    /// First affected day, 1-based.
    pub start_day: u32,
    pub duration_days: u32,
    /// Main-branch fail rate at the height of the incident, percent.
    pub fail_rate_peak: u32,
    /// PR cycle time at the height of the incident, hours.
    pub cycle_time_peak: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CrashSpike {
    /// Affected day, 1-based.
    pub day: u32,
    pub platform: String,
    /// Percent of sessions that crash that day.
    pub crash_rate: u32,
}

/// Explicit per-day targets, overriding the generated baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Curves {
    pub main_fail_rate: Vec<u32>,
    pub pr_cycle_time: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    pub platforms: Vec<String>,
    pub teams: Vec<String>,
    #[serde(default)]
    pub incident: Option<Incident>,
    #[serde(default)]
    pub crash_spike: Option<CrashSpike>,
    #[serde(default)]
    pub curves: Option<Curves>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Steady,
    Incident,
    CrashSpike,
}

impl FromStr for Preset {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "steady" => Ok(Preset::Steady),
            "incident" => Ok(Preset::Incident),
            "crash-spike" => Ok(Preset::CrashSpike),
            other => Err(ScenarioError::UnknownPreset(other.to_string())),
        }
    }
}

/// Daily main-fail-rate of the CI-incident preset, percent.
pub const INCIDENT_FAIL_RATE: [u32; 14] = [4, 5, 4, 6, 15, 20, 18, 16, 7, 5, 4, 5, 4, 4];
/// Daily PR cycle time of the CI-incident preset, hours.
pub const INCIDENT_CYCLE_TIME: [u32; 14] = [28, 26, 29, 31, 45, 52, 55, 48, 32, 29, 28, 27, 28, 26];

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 4).expect("valid date")
}

pub fn preset(p: Preset) -> ScenarioSpec {
    let teams = vec!["core".to_string(), "growth".to_string()];
    match p {
        Preset::Steady => ScenarioSpec {
            seed: 7,
            start: default_start(),
            days: 28,
            platforms: vec!["android".into(), "ios".into(), "web".into()],
            teams,
            incident: None,
            crash_spike: None,
            curves: None,
        },
        Preset::Incident => ScenarioSpec {
            seed: 42,
            start: default_start(),
            days: 14,
            platforms: vec!["android".into()],
            teams,
            incident: Some(Incident {
                start_day: 5,
                duration_days: 4,
                fail_rate_peak: 20,
                cycle_time_peak: 55,
            }),
            crash_spike: None,
            curves: Some(Curves {
                main_fail_rate: INCIDENT_FAIL_RATE.to_vec(),
                pr_cycle_time: INCIDENT_CYCLE_TIME.to_vec(),
            }),
        },
        Preset::CrashSpike => ScenarioSpec {
            seed: 11,
            start: default_start(),
            days: 14,
            platforms: vec!["android".into(), "ios".into()],
            teams,
            incident: None,
            crash_spike: Some(CrashSpike {
                day: 9,
                platform: "android".into(),
                crash_rate: 6,
            }),
            curves: None,
        },
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.days == 0 {
            return bad("days must be positive");
        }
        if self.platforms.is_empty() {
            return bad("at least one platform is required");
        }
        PlatformSet::new(&self.platforms).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.teams.is_empty() {
            return bad("at least one team is required");
        }
        let probe = Platform::new(self.platforms[0].clone()).expect("validated above");
        for t in &self.teams {
            if Scope::team(probe.clone(), t.clone()).is_err() {
                return Err(ScenarioError::Invalid(format!("bad team label {t:?}")));
            }
        }
        if let Some(i) = &self.incident {
            if i.start_day == 0 || i.duration_days == 0 || i.start_day + i.duration_days - 1 > self.days {
                return bad("incident must lie within [1, days]");
            }
            if i.fail_rate_peak == 0 || i.fail_rate_peak > 100 || i.cycle_time_peak == 0 {
                return bad("incident peaks must be positive (fail rate at most 100)");
            }
        }
        if let Some(c) = &self.crash_spike {
            if c.day == 0 || c.day > self.days {
                return bad("crash spike day must lie within [1, days]");
            }
            if !self.platforms.contains(&c.platform) {
                return bad("crash spike platform is not part of the scenario");
            }
            if c.crash_rate == 0 || c.crash_rate > 100 {
                return bad("crash rate must be within 1..=100");
            }
        }
        if let Some(c) = &self.curves {
            if c.main_fail_rate.len() != self.days as usize || c.pr_cycle_time.len() != self.days as usize {
                return bad("curves must have one value per day");
            }
            if c.main_fail_rate.iter().any(|&r| r > 100) || c.pr_cycle_time.iter().any(|&h| h == 0) {
                return bad("fail rates must be at most 100 and cycle times positive");
            }
        }
        Ok(())
    }

    pub fn platform_set(&self) -> PlatformSet {
        PlatformSet::new(&self.platforms).expect("validated spec")
    }

    /// Targets `(fail rate %, cycle time h)` for day `d` (0-based).
    fn targets(&self, d: u32, rng: &mut ChaCha8Rng) -> (u32, u32) {
        if let Some(c) = &self.curves {
            return (c.main_fail_rate[d as usize], c.pr_cycle_time[d as usize]);
        }
        let mut fail = [4, 5][rng.random_range(0..2)];
        let mut cycle = rng.random_range(26..=30);
        if let Some(i) = &self.incident {
            let day = d + 1;
            if day >= i.start_day && day < i.start_day + i.duration_days {
                // ramp up to the peak at the second incident day, then ease off
                let k = day - i.start_day;
                let pct = match k {
                    0 => 75,
                    1 => 100,
                    _ => 100u32.saturating_sub(10 * (k - 1)).max(60),
                };
                fail = fail.max(i.fail_rate_peak * pct / 100);
                cycle = cycle.max(i.cycle_time_peak * pct / 100);
            }
        }
        (fail, cycle)
    }
}

/// Main builds for a day with fail rate `p`: 25 when `p` is a multiple of 4,
/// otherwise the smallest count in 20..=100 that makes `p` exact.
pub fn main_build_count(p: u32) -> u32 {
    if p * 25 % 100 == 0 {
        return 25;
    }
    (20..=100).find(|n| p * n % 100 == 0).unwrap_or(100)
}

/// Generated fixture files, keyed by path relative to the fixture root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fixtures {
    pub files: BTreeMap<PathBuf, String>,
}

impl Fixtures {
    pub fn event_count(&self) -> usize {
        self.files.values().map(|t| t.lines().count()).sum()
    }

    /// Source directories present in the fixture set.
    pub fn source_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .files
            .keys()
            .filter_map(|p| p.components().next())
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        ids.dedup();
        ids
    }

    pub fn write_to(&self, root: &Path) -> io::Result<()> {
        for (rel, text) in &self.files {
            let path = root.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        Ok(())
    }
}

struct Sink {
    files: BTreeMap<PathBuf, String>,
}

impl Sink {
    fn put(&mut self, source: &str, event: EngineeringEvent) {
        let file = match &event {
            EngineeringEvent::UsageStats(u) => format!("{}.jsonl", u.month),
            other => format!("{}.jsonl", other.event_time().date_naive()),
        };
        let text = self.files.entry(Path::new(source).join(file)).or_default();
        text.push_str(&event.to_canonical_json());
        text.push('\n');
    }
}

fn at(day: NaiveDate, minutes: i64) -> Timestamp {
    day.and_hms_opt(0, 0, 0).expect("midnight").and_utc() + Duration::minutes(minutes)
}

fn hex_id(rng: &mut ChaCha8Rng) -> String {
    format!("{:016x}", rng.random::<u64>())
}

/// Developer ids per team. Some are spelled as e-mail addresses with mixed
/// case, as source systems do.
fn developers(team: &str) -> Vec<String> {
    (1..=6)
        .map(|i| match i % 3 {
            0 => format!("Dev-{team}-{i}@Example.com"),
            1 => format!("dev-{team}-{i}"),
            _ => format!("dev-{team}-{i}@example.com"),
        })
        .collect()
}

pub fn generate(spec: &ScenarioSpec) -> Result<Fixtures, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Sink {
        files: BTreeMap::new(),
    };
    let platforms: Vec<Platform> = spec
        .platforms
        .iter()
        .map(|p| Platform::new(p.clone()).expect("validated"))
        .collect();

    let mut issue_seq = 0u32;
    let mut pending_commits: BTreeMap<Platform, Vec<(String, Timestamp)>> = BTreeMap::new();
    let mut mau: BTreeMap<(Platform, YearMonth), u64> = BTreeMap::new();

    for d in 0..spec.days {
        let day = spec.start + Duration::days(d as i64);
        for platform in &platforms {
            let (fail_rate, cycle) = spec.targets(d, &mut rng);

            // main-branch builds: exactly fail_rate % failures
            let n = main_build_count(fail_rate);
            let failures = fail_rate * n / 100;
            let mut failed: Vec<bool> = (0..n).map(|i| i < failures).collect();
            for i in (1..failed.len()).rev() {
                failed.swap(i, rng.random_range(0..=i));
            }
            for (i, fail) in failed.into_iter().enumerate() {
                let start = 30 + (i as i64 * 1140) / n as i64;
                let dur = rng.random_range(15..=45);
                out.put(
                    "splunk",
                    EngineeringEvent::Build(BuildEvent {
                        build_id: format!("{platform}-main-{day}-{i:03}"),
                        platform: platform.clone(),
                        branch: "main".into(),
                        is_main_branch: true,
                        trigger_kind: TriggerKind::Main,
                        pr_id: None,
                        triggered_at: at(day, start),
                        finished_at: at(day, start + dur),
                        outcome: if fail { BuildOutcome::Failure } else { BuildOutcome::Success },
                    }),
                );
            }

            // merged PRs: cycle times c-δ, c, c+δ; each with commits and a
            // feedback build
            let delta = if cycle >= 2 { rng.random_range(1..=cycle.min(4) - 1) } else { 0 };
            let cycles = [cycle - delta, cycle, cycle + delta];
            for (i, c) in cycles.into_iter().enumerate() {
                let team = &spec.teams[(d as usize + i) % spec.teams.len()];
                let devs = developers(team);
                let author = devs[rng.random_range(0..devs.len())].clone();
                let merged = at(day, 600 + 180 * i as i64);
                let created = merged - Duration::hours(c as i64);
                let pr_id = format!("{platform}-{}", 1000 + d * 10 + i as u32);
                let n_commits = rng.random_range(1..=3);
                for j in 0..n_commits {
                    let span = (merged - created).num_minutes();
                    let when = created + Duration::minutes(span * (j + 1) / (n_commits + 1));
                    let id = hex_id(&mut rng);
                    pending_commits.entry(platform.clone()).or_default().push((id.clone(), when));
                    out.put(
                        "git",
                        EngineeringEvent::Commit(CommitEvent {
                            commit_id: id,
                            author_id: author.clone(),
                            branch: "main".into(),
                            committed_at: when,
                            platform: platform.clone(),
                        }),
                    );
                }
                let fb_start = created + Duration::minutes(5);
                out.put(
                    "splunk",
                    EngineeringEvent::Build(BuildEvent {
                        build_id: format!("{platform}-pr-{pr_id}"),
                        platform: platform.clone(),
                        branch: format!("feature/{pr_id}"),
                        is_main_branch: false,
                        trigger_kind: TriggerKind::PrFeedback,
                        pr_id: Some(pr_id.clone()),
                        triggered_at: fb_start,
                        finished_at: fb_start + Duration::minutes(rng.random_range(8..=40)),
                        outcome: BuildOutcome::Success,
                    }),
                );
                out.put(
                    "git",
                    EngineeringEvent::PullRequest(PullRequestEvent {
                        pr_id,
                        author_id: author,
                        team: team.clone(),
                        platform: platform.clone(),
                        created_at: created,
                        merged_at: Some(merged),
                        state: PrState::Merged,
                    }),
                );
            }
            // one PR still in review
            let team = &spec.teams[d as usize % spec.teams.len()];
            out.put(
                "git",
                EngineeringEvent::PullRequest(PullRequestEvent {
                    pr_id: format!("{platform}-{}", 1000 + d * 10 + 9),
                    author_id: developers(team)[0].clone(),
                    team: team.clone(),
                    platform: platform.clone(),
                    created_at: at(day, 900),
                    merged_at: None,
                    state: PrState::Open,
                }),
            );

            // evening production deployment shipping everything committed
            let deploy_at = at(day, 19 * 60);
            let ok = rng.random_bool(0.9);
            let queue = pending_commits.entry(platform.clone()).or_default();
            let shipped: Vec<(String, Timestamp)> = queue.iter().filter(|(_, t)| *t < deploy_at).cloned().collect();
            if ok {
                queue.retain(|(_, t)| *t >= deploy_at);
            }
            out.put(
                "deploy",
                EngineeringEvent::Deployment(DeploymentEvent {
                    deploy_id: format!("{platform}-deploy-{day}"),
                    platform: platform.clone(),
                    deployed_at: deploy_at,
                    commit_ids: shipped.into_iter().map(|(id, _)| id).collect(),
                    outcome: if ok { BuildOutcome::Success } else { BuildOutcome::Failure },
                }),
            );

            // issues: new bugs and testable stories, each snapshotted when
            // opened and again if closed within the period
            for k in 0..rng.random_range(1..=3) {
                issue_seq += 1;
                let bug = k > 0 || rng.random_bool(0.5);
                let priority = IssuePriority::ALL[rng.random_range(0..IssuePriority::ALL.len())];
                let opened = at(day, rng.random_range(8 * 60..18 * 60));
                let automation = (!bug).then(|| {
                    [AutomationStatus::ToBeAutomated, AutomationStatus::Automated, AutomationStatus::CannotAutomate]
                        [rng.random_range(0..3)]
                });
                let issue = IssueEvent {
                    issue_id: format!("{}-{issue_seq}", platform.as_str().to_uppercase()),
                    platform: platform.clone(),
                    kind: if bug { IssueKind::Bug } else { IssueKind::Story },
                    priority,
                    status: IssueStatus::Open,
                    automation_status: automation,
                    opened_at: opened,
                    closed_at: None,
                    snapshot_at: opened,
                };
                let close_after = rng.random_range(1..=6);
                if d + close_after < spec.days {
                    let closed = opened + Duration::days(close_after as i64);
                    out.put(
                        "jira",
                        EngineeringEvent::Issue(IssueEvent {
                            status: IssueStatus::Closed,
                            closed_at: Some(closed),
                            snapshot_at: closed,
                            ..issue.clone()
                        }),
                    );
                }
                out.put("jira", EngineeringEvent::Issue(issue));
            }

            // session stats; the spike day crashes at exactly the given rate
            let sessions = 10_000u64;
            let crash_pct_x10 = match &spec.crash_spike {
                Some(c) if c.day == d + 1 && c.platform == platform.as_str() => c.crash_rate as u64 * 10,
                _ => rng.random_range(5..=25),
            };
            let users = 4_000u64;
            let affected = users * crash_pct_x10 / 1000;
            out.put(
                "crash",
                EngineeringEvent::SessionStats(SessionStatsEvent {
                    platform: platform.clone(),
                    day,
                    total_sessions: sessions,
                    crashed_sessions: sessions * crash_pct_x10 / 1000,
                    total_users: users,
                    crash_free_users: users - affected,
                }),
            );

            // test suites get flaky while the CI incident lasts
            let in_incident = fail_rate >= 10;
            for r in 0..2 {
                let total = 200;
                let broken = if in_incident { rng.random_range(10..=30) } else { rng.random_range(0..=4) };
                out.put(
                    "splunk",
                    EngineeringEvent::TestSuiteRun(TestSuiteRunEvent {
                        run_id: format!("{platform}-tests-{day}-{r}"),
                        platform: platform.clone(),
                        ran_at: at(day, 120 + 600 * r),
                        suites_total: total,
                        suites_passed: total - broken,
                    }),
                );
            }
            let statements = 50_000;
            let covered = statements * (600 + d as u64 * 2 + rng.random_range(0..10)) / 1000;
            out.put(
                "splunk",
                EngineeringEvent::Coverage(CoverageEvent {
                    platform: platform.clone(),
                    measured_at: at(day, 23 * 60),
                    statements_total: statements,
                    statements_covered: covered.min(statements),
                }),
            );

            let shown = rng.random_range(400..=800);
            let accepted = shown * rng.random_range(20..=35) / 100;
            let declined = (shown - accepted) * rng.random_range(30..=60) / 100;
            out.put(
                "copilot",
                EngineeringEvent::AssistantUsage(AssistantUsageEvent {
                    platform: platform.clone(),
                    day,
                    suggestions_shown: shown,
                    suggestions_accepted: accepted,
                    suggestions_declined: declined,
                    lines_generated: accepted * rng.random_range(2..=6),
                }),
            );

            let month = YearMonth::of(day);
            if !mau.contains_key(&(platform.clone(), month)) {
                let base = 50_000 + 1_000 * (month.year() as u64 % 10) + 500 * month.month() as u64;
                mau.insert((platform.clone(), month), base + rng.random_range(0..2_000));
            }
        }
    }
    for ((platform, month), users) in mau {
        out.put(
            "tableau",
            EngineeringEvent::UsageStats(UsageStatsEvent {
                platform,
                month,
                active_users: users,
            }),
        );
    }
    Ok(Fixtures { files: out.files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_counts_make_rates_exact() {
        for p in INCIDENT_FAIL_RATE {
            let n = main_build_count(p);
            assert_eq!(p * n % 100, 0, "rate {p}");
            assert_eq!(100.0 * (p * n / 100) as f64 / n as f64, p as f64);
        }
        assert_eq!(main_build_count(4), 25);
        assert_eq!(main_build_count(20), 25);
        assert_eq!(main_build_count(5), 20);
        assert_eq!(main_build_count(7), 100);
    }

    #[test]
    fn presets_are_valid() {
        for p in [Preset::Steady, Preset::Incident, Preset::CrashSpike] {
            preset(p).validate().unwrap();
        }
        let spec = preset(Preset::Incident);
        let inc = spec.incident.unwrap();
        assert_eq!((inc.start_day, inc.start_day + inc.duration_days - 1, inc.fail_rate_peak), (5, 8, 20));
        assert!(preset(Preset::Steady).incident.is_none());
        assert!("bogus".parse::<Preset>().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = preset(Preset::Incident);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(generate(&other).unwrap(), a);
    }

    #[test]
    fn generated_events_are_valid() {
        let spec = preset(Preset::Steady);
        let platforms = spec.platform_set();
        let fx = generate(&spec).unwrap();
        assert!(fx.event_count() > 1000);
        for text in fx.files.values() {
            for line in text.lines() {
                EngineeringEvent::parse(line, &platforms).unwrap();
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = preset(Preset::Incident);
        s.incident.as_mut().unwrap().start_day = 13;
        assert!(s.validate().is_err());
        let mut s = preset(Preset::Incident);
        s.curves.as_mut().unwrap().pr_cycle_time.pop();
        assert!(s.validate().is_err());
        let mut s = preset(Preset::Steady);
        s.days = 0;
        assert!(s.validate().is_err());
    }
}
