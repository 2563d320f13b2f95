use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DomainError, Platform};

/// Aggregation level of a metric point. Scopes name platforms and teams,
/// never people.
///
/// String form: `org`, `<platform>`, `<platform>/<team>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scope {
    Org,
    Platform(Platform),
    Team { platform: Platform, team: String },
}

fn valid_team(team: &str) -> bool {
    !team.is_empty()
        && team
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Scope {
    pub fn team(platform: Platform, team: impl Into<String>) -> Result<Self, DomainError> {
        let team = team.into();
        if !valid_team(&team) {
            return Err(DomainError::InvalidScope(format!("{platform}/{team}")));
        }
        Ok(Self::Team { platform, team })
    }

    pub fn platform(&self) -> Option<&Platform> {
        match self {
            Scope::Org => None,
            Scope::Platform(p) | Scope::Team { platform: p, .. } => Some(p),
        }
    }

    pub fn team_label(&self) -> Option<&str> {
        match self {
            Scope::Team { team, .. } => Some(team),
            _ => None,
        }
    }

    pub fn is_org(&self) -> bool {
        matches!(self, Scope::Org)
    }

    /// Whether an event tagged with `platform` (and optionally `team`) falls
    /// inside this scope.
    pub fn admits(&self, platform: &Platform, team: Option<&str>) -> bool {
        match self {
            Scope::Org => true,
            Scope::Platform(p) => p == platform,
            Scope::Team { platform: p, team: t } => p == platform && team == Some(t.as_str()),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Org => f.write_str("org"),
            Scope::Platform(p) => write!(f, "{p}"),
            Scope::Team { platform, team } => write!(f, "{platform}/{team}"),
        }
    }
}

impl FromStr for Scope {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "org" {
            return Ok(Scope::Org);
        }
        let bad = || DomainError::InvalidScope(s.to_string());
        match s.split_once('/') {
            None => Platform::new(s).map(Scope::Platform).map_err(|_| bad()),
            Some((p, t)) => {
                let platform = Platform::new(p).map_err(|_| bad())?;
                Scope::team(platform, t).map_err(|_| bad())
            }
        }
    }
}

impl TryFrom<String> for Scope {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Scope> for String {
    fn from(s: Scope) -> Self {
        s.to_string()
    }
}

/// Pattern over scopes, used by alert rules and role permissions.
///
/// `*` matches everything, `android/*` matches the platform scope and all of
/// its teams, anything else must match a [`Scope`] exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScopeSelector {
    Any,
    PlatformTree(Platform),
    Exact(Scope),
}

impl ScopeSelector {
    pub fn matches(&self, scope: &Scope) -> bool {
        match self {
            ScopeSelector::Any => true,
            ScopeSelector::PlatformTree(p) => scope.platform() == Some(p),
            ScopeSelector::Exact(s) => s == scope,
        }
    }
}

impl fmt::Display for ScopeSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopeSelector::Any => f.write_str("*"),
            ScopeSelector::PlatformTree(p) => write!(f, "{p}/*"),
            ScopeSelector::Exact(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for ScopeSelector {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            return Ok(ScopeSelector::Any);
        }
        if let Some(p) = s.strip_suffix("/*") {
            return Platform::new(p)
                .map(ScopeSelector::PlatformTree)
                .map_err(|_| DomainError::InvalidSelector(s.to_string()));
        }
        s.parse()
            .map(ScopeSelector::Exact)
            .map_err(|_| DomainError::InvalidSelector(s.to_string()))
    }
}

impl TryFrom<String> for ScopeSelector {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ScopeSelector> for String {
    fn from(s: ScopeSelector) -> Self {
        s.to_string()
    }
}
