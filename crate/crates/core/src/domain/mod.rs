//! Shared vocabulary: platforms, scopes, time windows, the normalized event
//! union and metric identities.

mod event;
mod metric;
mod scope;
mod time;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{
    AssistantUsageEvent, AutomationStatus, BuildEvent, BuildOutcome, CommitEvent, CoverageEvent,
    DeploymentEvent, DeploymentOutcome, EngineeringEvent, EventKind, IssueEvent, IssueKind,
    IssuePriority, IssueStatus, PrState, PullRequestEvent, SessionStatsEvent, TestSuiteRunEvent,
    SchemaError, TriggerKind, UsageStatsEvent, SCHEMA_VERSION,
};
pub use metric::{DeveloperArea, MetricId, MetricKind};
pub use scope::{Scope, ScopeSelector};
pub use time::{window_for, TimeWindow, WindowGranularity, YearMonth};

pub type Timestamp = chrono::DateTime<chrono::Utc>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("user id is empty after trimming")]
    EmptyUserId,
    #[error("invalid platform label {0:?}: must be non-empty lowercase [a-z0-9-]")]
    InvalidPlatform(String),
    #[error("platform {0:?} is not in the configured platform set")]
    UnknownPlatform(String),
    #[error("invalid scope {0:?}")]
    InvalidScope(String),
    #[error("invalid scope selector {0:?}")]
    InvalidSelector(String),
    #[error("invalid time window: {0}")]
    InvalidWindow(String),
    #[error("unknown metric id {0:?}")]
    UnknownMetric(String),
    #[error("invalid year-month {0:?}")]
    InvalidMonth(String),
}

/// A platform label such as `android` or `web`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Platform(String);

impl Platform {
    pub fn new(label: impl Into<String>) -> Result<Self, DomainError> {
        let label = label.into();
        let valid = !label.is_empty()
            && label
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if valid {
            Ok(Self(label))
        } else {
            Err(DomainError::InvalidPlatform(label))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Platform {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Platform> for String {
    fn from(p: Platform) -> Self {
        p.0
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Platform {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// The closed set of platforms an installation accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlatformSet(BTreeSet<Platform>);

impl PlatformSet {
    pub fn new<I, S>(labels: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        labels
            .into_iter()
            .map(|l| Platform::new(l))
            .collect::<Result<BTreeSet<_>, _>>()
            .map(Self)
    }

    pub fn contains(&self, platform: &Platform) -> bool {
        self.0.contains(platform)
    }

    pub fn check(&self, platform: &Platform) -> Result<(), DomainError> {
        if self.contains(platform) {
            Ok(())
        } else {
            Err(DomainError::UnknownPlatform(platform.0.clone()))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Platform> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Canonical form of a user identifier: trimmed, case-folded, email domain
/// stripped. `" BOB.k@corp.example "` becomes `"bob.k"`.
pub fn standardize_user_id(raw: &str) -> Result<String, DomainError> {
    let trimmed = raw.trim();
    let local = match trimmed.find('@') {
        Some(at) => &trimmed[..at],
        None => trimmed,
    };
    let folded = local.trim().to_lowercase();
    if folded.is_empty() {
        return Err(DomainError::EmptyUserId);
    }
    Ok(folded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize_user_id("Alice@corp.example").unwrap(), "alice");
        assert_eq!(standardize_user_id("alice").unwrap(), "alice");
        assert_eq!(standardize_user_id(" BOB.k@corp.example ").unwrap(), "bob.k");
    }

    #[test]
    fn standardize_rejects_empty() {
        assert_eq!(standardize_user_id(""), Err(DomainError::EmptyUserId));
        assert_eq!(standardize_user_id("   "), Err(DomainError::EmptyUserId));
        assert_eq!(standardize_user_id("@corp.example"), Err(DomainError::EmptyUserId));
    }

    #[test]
    fn platform_labels() {
        assert!(Platform::new("android").is_ok());
        assert!(Platform::new("web-2").is_ok());
        assert!(Platform::new("").is_err());
        assert!(Platform::new("Android").is_err());
        assert!(Platform::new("i os").is_err());
        let set = PlatformSet::new(["android", "web"]).unwrap();
        assert!(set.check(&Platform::new("web").unwrap()).is_ok());
        assert!(set.check(&Platform::new("ios").unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent(raw in "[ a-zA-Z0-9._@-]{1,24}") {
            if let Ok(once) = standardize_user_id(&raw) {
                prop_assert_eq!(standardize_user_id(&once).unwrap(), once.clone());
            }
        }
    }
}
