//! Bearer-token authentication and role-based read permissions.
//!
//! Secrets never appear in configuration: each token is stored as
//! `hex(sha256(salt || secret))` next to its salt.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{MetricId, Scope, ScopeSelector};

pub fn hash_secret(salt: &str, secret: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(secret.as_bytes());
    hex::encode(h.finalize())
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Salted secret hash as stored in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SecretHash {
    pub salt: String,
    pub secret_sha256: String,
}

impl SecretHash {
    pub fn new(salt: &str, secret: &str) -> Self {
        Self {
            salt: salt.to_string(),
            secret_sha256: hash_secret(salt, secret),
        }
    }

    pub fn verify(&self, presented: &str) -> bool {
        let computed = hash_secret(&self.salt, presented);
        constant_time_eq(
            computed.as_bytes(),
            self.secret_sha256.to_ascii_lowercase().as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccessError {
    #[error("token {0:?} must allow at least one collection")]
    NoCollections(String),
    #[error("duplicate id {0:?}")]
    Duplicate(String),
    #[error("principal {0:?} must have at least one role")]
    NoRoles(String),
    #[error("principal {0:?} references unknown role {1:?}")]
    UnknownRole(String, String),
}

/// Credential for pushing events into named raw collections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ApiToken {
    pub token_id: String,
    pub principal: String,
    pub salt: String,
    pub secret_sha256: String,
    pub allowed_collections: BTreeSet<String>,
}

impl ApiToken {
    pub fn hash(&self) -> SecretHash {
        SecretHash {
            salt: self.salt.clone(),
            secret_sha256: self.secret_sha256.clone(),
        }
    }

    pub fn allows(&self, collection: &str) -> bool {
        self.allowed_collections.contains(collection)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    tokens: Vec<ApiToken>,
}

impl TokenTable {
    pub fn new(tokens: Vec<ApiToken>) -> Result<Self, AccessError> {
        let mut ids = BTreeSet::new();
        for t in &tokens {
            if t.allowed_collections.is_empty() {
                return Err(AccessError::NoCollections(t.token_id.clone()));
            }
            if !ids.insert(t.token_id.as_str()) {
                return Err(AccessError::Duplicate(t.token_id.clone()));
            }
        }
        Ok(Self { tokens })
    }

    pub fn authenticate(&self, secret: &str) -> Option<&ApiToken> {
        self.tokens.iter().find(|t| t.hash().verify(secret))
    }
}

/// Metrics a role may read: every metric, or an explicit set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricGrant {
    All(AllMetrics),
    Only(BTreeSet<MetricId>),
}

/// The `"*"` wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllMetrics {
    #[serde(rename = "*")]
    Wildcard,
}

impl MetricGrant {
    pub fn admits(&self, metric: MetricId) -> bool {
        match self {
            MetricGrant::All(_) => true,
            MetricGrant::Only(set) => set.contains(&metric),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Role {
    pub name: String,
    pub readable_metrics: MetricGrant,
    pub readable_scopes: Vec<ScopeSelector>,
    #[serde(default)]
    pub raw_drilldown: bool,
}

impl Role {
    pub fn permits(&self, metric: MetricId, scope: &Scope) -> bool {
        self.readable_metrics.admits(metric) && self.readable_scopes.iter().any(|s| s.matches(scope))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Principal {
    pub name: String,
    pub roles: BTreeSet<String>,
    pub salt: String,
    pub token_sha256: String,
}

/// Roles plus the principals holding them.
#[derive(Debug, Clone, Default)]
pub struct AccessPolicy {
    roles: BTreeMap<String, Role>,
    principals: Vec<Principal>,
}

impl AccessPolicy {
    pub fn new(roles: Vec<Role>, principals: Vec<Principal>) -> Result<Self, AccessError> {
        let mut by_name = BTreeMap::new();
        for r in roles {
            let name = r.name.clone();
            if by_name.insert(name.clone(), r).is_some() {
                return Err(AccessError::Duplicate(name));
            }
        }
        let mut names = BTreeSet::new();
        for p in &principals {
            if !names.insert(p.name.as_str()) {
                return Err(AccessError::Duplicate(p.name.clone()));
            }
            if p.roles.is_empty() {
                return Err(AccessError::NoRoles(p.name.clone()));
            }
            if let Some(missing) = p.roles.iter().find(|r| !by_name.contains_key(*r)) {
                return Err(AccessError::UnknownRole(p.name.clone(), missing.clone()));
            }
        }
        Ok(Self {
            roles: by_name,
            principals,
        })
    }

    pub fn authenticate(&self, secret: &str) -> Option<&Principal> {
        self.principals.iter().find(|p| {
            SecretHash {
                salt: p.salt.clone(),
                secret_sha256: p.token_sha256.clone(),
            }
            .verify(secret)
        })
    }

    fn roles_of<'a>(&'a self, p: &'a Principal) -> impl Iterator<Item = &'a Role> + 'a {
        p.roles.iter().filter_map(|r| self.roles.get(r))
    }

    /// Some role of `p` grants both the metric and the scope.
    pub fn can_read(&self, p: &Principal, metric: MetricId, scope: &Scope) -> bool {
        self.roles_of(p).any(|r| r.permits(metric, scope))
    }

    /// Some drill-down role of `p` grants both the metric and the scope.
    pub fn can_drilldown(&self, p: &Principal, metric: MetricId, scope: &Scope) -> bool {
        self.roles_of(p).any(|r| r.raw_drilldown && r.permits(metric, scope))
    }

    /// Some role of `p` grants the metric for at least one scope.
    pub fn can_see_metric(&self, p: &Principal, metric: MetricId) -> bool {
        self.roles_of(p).any(|r| r.readable_metrics.admits(metric))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn role(json: &str) -> Role {
        serde_json::from_str(json).unwrap()
    }

    fn principal(name: &str, roles: &[&str], secret: &str) -> Principal {
        let h = SecretHash::new("pepper", secret);
        Principal {
            name: name.into(),
            roles: roles.iter().map(|r| r.to_string()).collect(),
            salt: h.salt,
            token_sha256: h.secret_sha256,
        }
    }

    #[test]
    fn hashing_and_verification() {
        let h = SecretHash::new("s", "hunter2");
        assert!(h.verify("hunter2"));
        assert!(!h.verify("hunter3"));
        assert_eq!(hash_secret("s", "x").len(), 64);
    }

    #[test]
    fn role_permissions() {
        let admin = role(r#"{"name":"admin","readable-metrics":"*","readable-scopes":["*"],"raw-drilldown":true}"#);
        let viewer = role(
            r#"{"name":"viewer","readable-metrics":["pr-cycle-time","main-fail-rate"],"readable-scopes":["android/*"]}"#,
        );
        let policy = AccessPolicy::new(
            vec![admin, viewer],
            vec![principal("ada", &["admin"], "a"), principal("vic", &["viewer"], "v")],
        )
        .unwrap();
        let vic = policy.authenticate("v").unwrap();
        assert_eq!(vic.name, "vic");
        let android: Scope = "android".parse().unwrap();
        assert!(policy.can_read(vic, MetricId::PrCycleTime, &android));
        assert!(!policy.can_read(vic, MetricId::UserCrashRate, &android));
        assert!(!policy.can_read(vic, MetricId::PrCycleTime, &Scope::Org));
        assert!(!policy.can_drilldown(vic, MetricId::PrCycleTime, &android));
        let ada = policy.authenticate("a").unwrap();
        assert!(policy.can_drilldown(ada, MetricId::MainFailRate, &Scope::Org));
        assert!(policy.authenticate("nope").is_none());
    }

    #[test]
    fn policy_validation() {
        let r = role(r#"{"name":"r","readable-metrics":"*","readable-scopes":["*"]}"#);
        assert!(matches!(
            AccessPolicy::new(vec![r.clone()], vec![principal("p", &["missing"], "x")]),
            Err(AccessError::UnknownRole(..))
        ));
        assert!(matches!(
            AccessPolicy::new(vec![r.clone(), r], vec![]),
            Err(AccessError::Duplicate(_))
        ));
        let t = ApiToken {
            token_id: "t".into(),
            principal: "p".into(),
            salt: "s".into(),
            secret_sha256: hash_secret("s", "x"),
            allowed_collections: BTreeSet::new(),
        };
        assert!(matches!(TokenTable::new(vec![t]), Err(AccessError::NoCollections(_))));
    }
}
