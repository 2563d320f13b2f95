use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{standardize_user_id, Platform, PlatformSet, Scope, Timestamp, YearMonth};

/// Version stamped into every serialized event.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("not a JSON object: {0}")]
    Json(String),
    #[error("missing \"schema-version\"")]
    MissingSchemaVersion,
    #[error("unsupported schema-version {0}")]
    UnsupportedVersion(String),
    #[error("schema violation: {0}")]
    Shape(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("platform {0:?} is not configured")]
    UnknownPlatform(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrState {
    Open,
    Merged,
    ClosedUnmerged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    PrFeedback,
    Main,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildOutcome {
    Success,
    Failure,
}

pub type DeploymentOutcome = BuildOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    Bug,
    Story,
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssuePriority {
    Blocker,
    Critical,
    Major,
    Normal,
    Minor,
}

impl IssuePriority {
    pub const ALL: [IssuePriority; 5] = [
        IssuePriority::Blocker,
        IssuePriority::Critical,
        IssuePriority::Major,
        IssuePriority::Normal,
        IssuePriority::Minor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IssuePriority::Blocker => "blocker",
            IssuePriority::Critical => "critical",
            IssuePriority::Major => "major",
            IssuePriority::Normal => "normal",
            IssuePriority::Minor => "minor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutomationStatus {
    ToBeAutomated,
    Automated,
    CannotAutomate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CommitEvent {
    pub commit_id: String,
    pub author_id: String,
    pub branch: String,
    pub committed_at: Timestamp,
    pub platform: Platform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PullRequestEvent {
    pub pr_id: String,
    pub author_id: String,
    pub team: String,
    pub platform: Platform,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_at: Option<Timestamp>,
    pub state: PrState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BuildEvent {
    pub build_id: String,
    pub platform: Platform,
    pub branch: String,
    pub is_main_branch: bool,
    pub trigger_kind: TriggerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_id: Option<String>,
    pub triggered_at: Timestamp,
    pub finished_at: Timestamp,
    pub outcome: BuildOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DeploymentEvent {
    pub deploy_id: String,
    pub platform: Platform,
    pub deployed_at: Timestamp,
    pub commit_ids: BTreeSet<String>,
    pub outcome: DeploymentOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct IssueEvent {
    pub issue_id: String,
    pub platform: Platform,
    pub kind: IssueKind,
    pub priority: IssuePriority,
    pub status: IssueStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automation_status: Option<AutomationStatus>,
    pub opened_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Timestamp>,
    pub snapshot_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SessionStatsEvent {
    pub platform: Platform,
    pub day: NaiveDate,
    pub total_sessions: u64,
    pub crashed_sessions: u64,
    pub total_users: u64,
    pub crash_free_users: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TestSuiteRunEvent {
    pub run_id: String,
    pub platform: Platform,
    pub ran_at: Timestamp,
    pub suites_total: u64,
    pub suites_passed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CoverageEvent {
    pub platform: Platform,
    pub measured_at: Timestamp,
    pub statements_total: u64,
    pub statements_covered: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct UsageStatsEvent {
    pub platform: Platform,
    pub month: YearMonth,
    pub active_users: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AssistantUsageEvent {
    pub platform: Platform,
    pub day: NaiveDate,
    pub suggestions_shown: u64,
    pub suggestions_accepted: u64,
    pub suggestions_declined: u64,
    pub lines_generated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Commit,
    PullRequest,
    Build,
    Deployment,
    Issue,
    SessionStats,
    TestSuiteRun,
    Coverage,
    UsageStats,
    AssistantUsage,
}

/// Normalized telemetry record. Serialized with an `event-kind`
/// discriminator and a `schema-version` field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event-kind", rename_all = "kebab-case")]
pub enum EngineeringEvent {
    Commit(CommitEvent),
    PullRequest(PullRequestEvent),
    Build(BuildEvent),
    Deployment(DeploymentEvent),
    Issue(IssueEvent),
    SessionStats(SessionStatsEvent),
    TestSuiteRun(TestSuiteRunEvent),
    Coverage(CoverageEvent),
    UsageStats(UsageStatsEvent),
    AssistantUsage(AssistantUsageEvent),
}

#[derive(Serialize)]
struct Envelope<'a> {
    #[serde(rename = "schema-version")]
    schema_version: u32,
    #[serde(flatten)]
    event: &'a EngineeringEvent,
}

fn invariant(ok: bool, what: &str) -> Result<(), SchemaError> {
    if ok {
        Ok(())
    } else {
        Err(SchemaError::Invariant(what.to_string()))
    }
}

fn non_empty(s: &str, field: &str) -> Result<(), SchemaError> {
    invariant(!s.trim().is_empty(), &format!("{field} must be non-empty"))
}

impl EngineeringEvent {
    /// Parses and validates one canonical JSON event.
    pub fn parse(text: &str, platforms: &PlatformSet) -> Result<Self, SchemaError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        Self::from_value(value, platforms)
    }

    pub fn from_value(
        mut value: serde_json::Value,
        platforms: &PlatformSet,
    ) -> Result<Self, SchemaError> {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| SchemaError::Json("expected a JSON object".into()))?;
        let version = obj
            .remove("schema-version")
            .ok_or(SchemaError::MissingSchemaVersion)?;
        if version.as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(SchemaError::UnsupportedVersion(version.to_string()));
        }
        let event: EngineeringEvent =
            serde_json::from_value(value).map_err(|e| SchemaError::Shape(e.to_string()))?;
        event.validate(platforms)?;
        Ok(event)
    }

    pub fn to_canonical_value(&self) -> serde_json::Value {
        serde_json::to_value(Envelope {
            schema_version: SCHEMA_VERSION,
            event: self,
        })
        .expect("events always serialize")
    }

    /// One-line canonical JSON form.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(&Envelope {
            schema_version: SCHEMA_VERSION,
            event: self,
        })
        .expect("events always serialize")
    }

    pub fn kind(&self) -> EventKind {
        match self {
            Self::Commit(_) => EventKind::Commit,
            Self::PullRequest(_) => EventKind::PullRequest,
            Self::Build(_) => EventKind::Build,
            Self::Deployment(_) => EventKind::Deployment,
            Self::Issue(_) => EventKind::Issue,
            Self::SessionStats(_) => EventKind::SessionStats,
            Self::TestSuiteRun(_) => EventKind::TestSuiteRun,
            Self::Coverage(_) => EventKind::Coverage,
            Self::UsageStats(_) => EventKind::UsageStats,
            Self::AssistantUsage(_) => EventKind::AssistantUsage,
        }
    }

    pub fn platform(&self) -> &Platform {
        match self {
            Self::Commit(e) => &e.platform,
            Self::PullRequest(e) => &e.platform,
            Self::Build(e) => &e.platform,
            Self::Deployment(e) => &e.platform,
            Self::Issue(e) => &e.platform,
            Self::SessionStats(e) => &e.platform,
            Self::TestSuiteRun(e) => &e.platform,
            Self::Coverage(e) => &e.platform,
            Self::UsageStats(e) => &e.platform,
            Self::AssistantUsage(e) => &e.platform,
        }
    }

    /// Source-scoped identity used for raw-store deduplication.
    pub fn natural_key(&self) -> String {
        match self {
            Self::Commit(e) => format!("commit:{}:{}", e.platform, e.commit_id),
            Self::PullRequest(e) => format!("pr:{}", e.pr_id),
            Self::Build(e) => format!("build:{}", e.build_id),
            Self::Deployment(e) => format!("deploy:{}", e.deploy_id),
            Self::Issue(e) => format!("issue:{}", e.issue_id),
            Self::SessionStats(e) => format!("session:{}:{}", e.platform, e.day),
            Self::TestSuiteRun(e) => format!("test-run:{}", e.run_id),
            Self::Coverage(e) => format!(
                "coverage:{}:{}",
                e.platform,
                e.measured_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            ),
            Self::UsageStats(e) => format!("usage:{}:{}", e.platform, e.month),
            Self::AssistantUsage(e) => format!("assistant:{}:{}", e.platform, e.day),
        }
    }

    /// The instant an event describes; drives incremental watermarks.
    pub fn event_time(&self) -> Timestamp {
        let midnight = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        match self {
            Self::Commit(e) => e.committed_at,
            Self::PullRequest(e) => e.merged_at.unwrap_or(e.created_at),
            Self::Build(e) => e.finished_at,
            Self::Deployment(e) => e.deployed_at,
            Self::Issue(e) => e.snapshot_at,
            Self::SessionStats(e) => midnight(e.day),
            Self::TestSuiteRun(e) => e.ran_at,
            Self::Coverage(e) => e.measured_at,
            Self::UsageStats(e) => e.month.start(),
            Self::AssistantUsage(e) => midnight(e.day),
        }
    }

    pub fn validate(&self, platforms: &PlatformSet) -> Result<(), SchemaError> {
        if !platforms.contains(self.platform()) {
            return Err(SchemaError::UnknownPlatform(self.platform().to_string()));
        }
        match self {
            Self::Commit(e) => {
                non_empty(&e.commit_id, "commit-id")?;
                non_empty(&e.branch, "branch")?;
                invariant(
                    standardize_user_id(&e.author_id).is_ok(),
                    "author-id must be non-empty",
                )
            }
            Self::PullRequest(e) => {
                non_empty(&e.pr_id, "pr-id")?;
                invariant(
                    standardize_user_id(&e.author_id).is_ok(),
                    "author-id must be non-empty",
                )?;
                invariant(
                    Scope::team(e.platform.clone(), e.team.clone()).is_ok(),
                    "team must be a non-empty [A-Za-z0-9_-] label",
                )?;
                invariant(
                    e.merged_at.is_some() == (e.state == PrState::Merged),
                    "merged-at present iff state = merged",
                )?;
                invariant(
                    e.merged_at.is_none_or(|m| m >= e.created_at),
                    "merged-at >= created-at",
                )
            }
            Self::Build(e) => {
                non_empty(&e.build_id, "build-id")?;
                invariant(e.finished_at >= e.triggered_at, "finished-at >= triggered-at")
            }
            Self::Deployment(e) => {
                non_empty(&e.deploy_id, "deploy-id")?;
                invariant(
                    e.outcome != BuildOutcome::Success || !e.commit_ids.is_empty(),
                    "commit-ids non-empty for successful deployments",
                )
            }
            Self::Issue(e) => {
                non_empty(&e.issue_id, "issue-id")?;
                invariant(
                    e.closed_at.is_some() == (e.status == IssueStatus::Closed),
                    "closed-at present iff status = closed",
                )?;
                invariant(e.snapshot_at >= e.opened_at, "snapshot-at >= opened-at")
            }
            Self::SessionStats(e) => {
                invariant(
                    e.crashed_sessions <= e.total_sessions,
                    "crashed-sessions <= total-sessions",
                )?;
                invariant(
                    e.crash_free_users <= e.total_users,
                    "crash-free-users <= total-users",
                )
            }
            Self::TestSuiteRun(e) => {
                non_empty(&e.run_id, "run-id")?;
                invariant(e.suites_passed <= e.suites_total, "suites-passed <= suites-total")
            }
            Self::Coverage(e) => invariant(
                e.statements_covered <= e.statements_total,
                "statements-covered <= statements-total",
            ),
            Self::UsageStats(_) => Ok(()),
            Self::AssistantUsage(e) => invariant(
                e.suggestions_accepted
                    .checked_add(e.suggestions_declined)
                    .is_some_and(|s| s <= e.suggestions_shown),
                "suggestions accepted + declined <= shown",
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn platforms() -> PlatformSet {
        PlatformSet::new(["android", "web"]).unwrap()
    }

    const COMMIT: &str = r#"{"schema-version":1,"event-kind":"commit","commit-id":"c1","author-id":"Alice@corp.example","branch":"main","committed-at":"2024-03-04T10:00:00Z","platform":"android"}"#;

    #[test]
    fn canonical_round_trip() {
        let e = EngineeringEvent::parse(COMMIT, &platforms()).unwrap();
        assert_eq!(e.kind(), EventKind::Commit);
        assert_eq!(e.natural_key(), "commit:android:c1");
        assert_eq!(e.to_canonical_json(), COMMIT);
    }

    #[test]
    fn unknown_platform_fails() {
        let line = COMMIT.replace("android", "ios");
        assert_eq!(
            EngineeringEvent::parse(&line, &platforms()),
            Err(SchemaError::UnknownPlatform("ios".into()))
        );
    }

    #[test]
    fn schema_version_required() {
        let line = COMMIT.replace(r#""schema-version":1,"#, "");
        assert_eq!(
            EngineeringEvent::parse(&line, &platforms()),
            Err(SchemaError::MissingSchemaVersion)
        );
        let line = COMMIT.replace(r#""schema-version":1"#, r#""schema-version":2"#);
        assert!(matches!(
            EngineeringEvent::parse(&line, &platforms()),
            Err(SchemaError::UnsupportedVersion(_))
        ));
    }

    #[test]
    fn unknown_fields_and_kinds_rejected() {
        let line = COMMIT.replace(r#""branch""#, r#""extra":1,"branch""#);
        assert!(matches!(
            EngineeringEvent::parse(&line, &platforms()),
            Err(SchemaError::Shape(_))
        ));
        let line = COMMIT.replace(r#""commit""#, r#""tweet""#);
        assert!(matches!(
            EngineeringEvent::parse(&line, &platforms()),
            Err(SchemaError::Shape(_))
        ));
    }

    #[test]
    fn pr_merge_invariants() {
        let ok = r#"{"schema-version":1,"event-kind":"pull-request","pr-id":"p1","author-id":"bob","team":"core","platform":"web","created-at":"2024-03-04T00:00:00Z","merged-at":"2024-03-05T04:00:00Z","state":"merged"}"#;
        assert!(EngineeringEvent::parse(ok, &platforms()).is_ok());
        let open_with_merge = ok.replace(r#""state":"merged""#, r#""state":"open""#);
        assert!(matches!(
            EngineeringEvent::parse(&open_with_merge, &platforms()),
            Err(SchemaError::Invariant(_))
        ));
        let backwards = ok.replace("2024-03-05T04", "2024-03-03T04");
        assert!(matches!(
            EngineeringEvent::parse(&backwards, &platforms()),
            Err(SchemaError::Invariant(_))
        ));
    }

    #[test]
    fn count_invariants() {
        let s = r#"{"schema-version":1,"event-kind":"session-stats","platform":"web","day":"2024-03-04","total-sessions":10,"crashed-sessions":11,"total-users":5,"crash-free-users":5}"#;
        assert!(matches!(
            EngineeringEvent::parse(s, &platforms()),
            Err(SchemaError::Invariant(_))
        ));
        let a = r#"{"schema-version":1,"event-kind":"assistant-usage","platform":"web","day":"2024-03-04","suggestions-shown":10,"suggestions-accepted":6,"suggestions-declined":5,"lines-generated":3}"#;
        assert!(matches!(
            EngineeringEvent::parse(a, &platforms()),
            Err(SchemaError::Invariant(_))
        ));
    }

    #[test]
    fn failed_deploy_may_be_empty() {
        let d = r#"{"schema-version":1,"event-kind":"deployment","deploy-id":"d1","platform":"web","deployed-at":"2024-03-04T00:00:00Z","commit-ids":[],"outcome":"failure"}"#;
        assert!(EngineeringEvent::parse(d, &platforms()).is_ok());
        let d = d.replace("failure", "success");
        assert!(EngineeringEvent::parse(&d, &platforms()).is_err());
    }
}
