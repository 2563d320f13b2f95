//! Threshold alerts over freshly computed metric points, and the
//! notification path shared with the scheduler.

mod sinks;

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::connectors::ExpiryWarning;
use crate::domain::{MetricId, ScopeSelector, Timestamp, WindowGranularity};
use crate::storage::MetricPoint;

pub use sinks::{DeliveryRecord, FileSink, MemorySink, Notifier, Sink, SinkError, StdoutSink, WebhookSink};

const DEFAULT_COOLDOWN_SECS: u64 = 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
        }
    }
}

fn default_cooldown() -> u64 {
    DEFAULT_COOLDOWN_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AlertRule {
    pub rule_id: String,
    pub metric_id: MetricId,
    pub scope: ScopeSelector,
    pub comparator: Comparator,
    pub threshold: f64,
    /// Name of the sink notifications go to.
    pub channel: String,
    #[serde(default = "default_cooldown")]
    pub cooldown_secs: u64,
    /// Restricts the rule to windows of one granularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<WindowGranularity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule {0:?}: metric {1} is not numeric-valued")]
    NonNumericMetric(String, MetricId),
    #[error("rule {0:?}: threshold must be finite")]
    NonFiniteThreshold(String),
    #[error("rule {0:?}: unknown sink {1:?}")]
    UnknownSink(String, String),
    #[error("duplicate rule id {0:?}")]
    DuplicateRule(String),
    #[error("rule id must be non-empty")]
    EmptyRuleId,
}

impl AlertRule {
    pub fn cooldown(&self) -> Duration {
        Duration::seconds(self.cooldown_secs.min(i64::MAX as u64) as i64)
    }

    pub fn validate(&self, sinks: &BTreeSet<String>) -> Result<(), RuleError> {
        if self.rule_id.trim().is_empty() {
            return Err(RuleError::EmptyRuleId);
        }
        if !self.metric_id.is_numeric() {
            return Err(RuleError::NonNumericMetric(self.rule_id.clone(), self.metric_id));
        }
        if !self.threshold.is_finite() {
            return Err(RuleError::NonFiniteThreshold(self.rule_id.clone()));
        }
        if !sinks.contains(&self.channel) {
            return Err(RuleError::UnknownSink(self.rule_id.clone(), self.channel.clone()));
        }
        Ok(())
    }

    /// Whether `point` is in this rule's scope and breaches it.
    pub fn breached_by(&self, point: &MetricPoint) -> bool {
        point.metric_id == self.metric_id
            && self.scope.matches(&point.scope)
            && self.granularity.is_none_or(|g| point.window.granularity() == g)
            && point
                .value
                .as_number()
                .is_some_and(|v| self.comparator.holds(v, self.threshold))
    }
}

/// Validates a rule set against the registered sink names.
pub fn validate_rules(rules: &[AlertRule], sinks: &BTreeSet<String>) -> Result<(), RuleError> {
    let mut seen = BTreeSet::new();
    for r in rules {
        r.validate(sinks)?;
        if !seen.insert(r.rule_id.as_str()) {
            return Err(RuleError::DuplicateRule(r.rule_id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AlertEvent {
    pub rule_id: String,
    pub point: MetricPoint,
    pub threshold: f64,
    pub comparator: Comparator,
    pub channel: String,
    pub fired_at: Timestamp,
    pub message: String,
}

/// When each rule last fired.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FireHistory(BTreeMap<String, Timestamp>);

impl FireHistory {
    pub fn last_fired(&self, rule_id: &str) -> Option<Timestamp> {
        self.0.get(rule_id).copied()
    }

    fn cooling(&self, rule: &AlertRule, now: Timestamp) -> bool {
        self.last_fired(&rule.rule_id)
            .is_some_and(|last| now - last < rule.cooldown())
    }
}

/// One event per (rule, breaching point) unless the rule fired within its
/// cooldown. Points are visited in key order, so the outcome depends only on
/// the inputs.
pub fn evaluate(
    points: &[MetricPoint],
    rules: &[AlertRule],
    history: &mut FireHistory,
    now: Timestamp,
) -> Vec<AlertEvent> {
    let mut ordered: Vec<&MetricPoint> = points.iter().collect();
    ordered.sort_by_key(|p| p.key());
    let mut events = Vec::new();
    for rule in rules {
        for point in ordered.iter().filter(|p| rule.breached_by(p)) {
            if history.cooling(rule, now) {
                log::debug!("rule {} cooling down, breach at {} suppressed", rule.rule_id, point.window);
                continue;
            }
            let value = point.value.as_number().expect("breach implies numeric");
            events.push(AlertEvent {
                rule_id: rule.rule_id.clone(),
                point: (*point).clone(),
                threshold: rule.threshold,
                comparator: rule.comparator,
                channel: rule.channel.clone(),
                fired_at: now,
                message: format!(
                    "{} for {} in {} is {} ({} {})",
                    point.metric_id.display_name(),
                    point.scope,
                    point.window,
                    value,
                    rule.comparator.symbol(),
                    rule.threshold
                ),
            });
            history.0.insert(rule.rule_id.clone(), now);
        }
    }
    events
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct JobFailure {
    pub source_id: String,
    pub scheduled_at: Timestamp,
    pub status: String,
    pub attempts: usize,
    pub last_error: String,
}

/// Everything that can be delivered to a sink.
#[derive(Debug, Clone, PartialEq)]
pub enum Notification {
    Alert(AlertEvent),
    JobFailed(JobFailure),
    CredentialExpiring(ExpiryWarning),
}

impl Notification {
    /// Flat JSON body used by every sink.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Notification::Alert(e) => json!({
                "rule-id": e.rule_id,
                "metric-id": e.point.metric_id,
                "scope": e.point.scope.to_string(),
                "window": e.point.window.to_string(),
                "value": e.point.value.as_number(),
                "threshold": e.threshold,
                "fired-at": e.fired_at,
            }),
            Notification::JobFailed(f) => json!({
                "kind": "job-failed",
                "source-id": f.source_id,
                "scheduled-at": f.scheduled_at,
                "status": f.status,
                "attempts": f.attempts,
                "last-error": f.last_error,
            }),
            Notification::CredentialExpiring(w) => json!({
                "kind": "credential-expiring",
                "source-id": w.source_id,
                "expires-at": w.expires_at,
            }),
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Notification::Alert(e) => e.message.clone(),
            Notification::JobFailed(f) => format!(
                "job {} {} after {} attempts: {}",
                f.source_id, f.status, f.attempts, f.last_error
            ),
            Notification::CredentialExpiring(w) => {
                format!("credential for {} expires at {}", w.source_id, w.expires_at)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{window_for, Scope};
    use crate::storage::MetricValue;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn point(value: f64, day: &str) -> MetricPoint {
        MetricPoint {
            metric_id: MetricId::UserCrashRate,
            scope: "android".parse().unwrap(),
            window: window_for(ts(day), WindowGranularity::Daily),
            value: MetricValue::Number(value),
            computed_at: ts("2024-04-01T00:00:00Z"),
            sample_size: 1,
            extras: BTreeMap::new(),
        }
    }

    fn rule(cmp: Comparator, threshold: f64, cooldown_secs: u64) -> AlertRule {
        AlertRule {
            rule_id: "crash".into(),
            metric_id: MetricId::UserCrashRate,
            scope: ScopeSelector::Any,
            comparator: cmp,
            threshold,
            channel: "ops".into(),
            cooldown_secs,
            granularity: None,
        }
    }

    #[test]
    fn strict_boundary() {
        let now = ts("2024-04-01T00:00:00Z");
        let r = [rule(Comparator::Gt, 5.0, 0)];
        let mut h = FireHistory::default();
        assert_eq!(evaluate(&[point(6.0, "2024-03-09T00:00:00Z")], &r, &mut h, now).len(), 1);
        let mut h = FireHistory::default();
        assert!(evaluate(&[point(5.0, "2024-03-09T00:00:00Z")], &r, &mut h, now).is_empty());
        let r = [rule(Comparator::Ge, 5.0, 0)];
        assert_eq!(evaluate(&[point(5.0, "2024-03-09T00:00:00Z")], &r, &mut h, now).len(), 1);
    }

    #[test]
    fn cooldown_collapses_breaches() {
        let now = ts("2024-04-01T00:00:00Z");
        let r = [rule(Comparator::Gt, 5.0, 24 * 3600)];
        let mut h = FireHistory::default();
        let pts = [point(6.0, "2024-03-09T00:00:00Z"), point(7.0, "2024-03-10T00:00:00Z")];
        let fired = evaluate(&pts, &r, &mut h, now);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].point.window.start(), ts("2024-03-09T00:00:00Z"));
        // an hour later: still cooling
        assert!(evaluate(&pts, &r, &mut h, now + Duration::hours(1)).is_empty());
        // after the cooldown it fires again
        assert_eq!(evaluate(&pts, &r, &mut h, now + Duration::hours(24)).len(), 1);
    }

    #[test]
    fn rule_validation() {
        let sinks = BTreeSet::from(["ops".to_string()]);
        assert!(rule(Comparator::Gt, 5.0, 0).validate(&sinks).is_ok());
        let mut bad = rule(Comparator::Gt, 5.0, 0);
        bad.metric_id = MetricId::BugMix;
        assert!(matches!(bad.validate(&sinks), Err(RuleError::NonNumericMetric(..))));
        let mut bad = rule(Comparator::Gt, f64::NAN, 0);
        assert!(matches!(bad.validate(&sinks), Err(RuleError::NonFiniteThreshold(_))));
        bad = rule(Comparator::Gt, 1.0, 0);
        bad.channel = "nowhere".into();
        assert!(matches!(bad.validate(&sinks), Err(RuleError::UnknownSink(..))));
        let dup = [rule(Comparator::Gt, 1.0, 0), rule(Comparator::Lt, 1.0, 0)];
        assert!(matches!(validate_rules(&dup, &sinks), Err(RuleError::DuplicateRule(_))));
    }

    #[test]
    fn rule_parses_from_config_json() {
        let r: AlertRule = serde_json::from_str(
            r#"{"rule-id":"crash","metric-id":"user-crash-rate","scope":"*","comparator":"gt","threshold":5,"channel":"ops"}"#,
        )
        .unwrap();
        assert_eq!(r.cooldown(), Duration::hours(24));
        assert_eq!(r.scope, ScopeSelector::Any);
    }

    #[test]
    fn webhook_body_is_flat() {
        let now = ts("2024-04-01T00:00:00Z");
        let mut h = FireHistory::default();
        let e = evaluate(&[point(6.0, "2024-03-09T00:00:00Z")], &[rule(Comparator::Gt, 5.0, 0)], &mut h, now)
            .remove(0);
        let body = Notification::Alert(e).to_json();
        let keys: Vec<_> = body.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["fired-at", "metric-id", "rule-id", "scope", "threshold", "value", "window"]
        );
        assert_eq!(body["scope"], "android");
        assert_eq!(body["value"], 6.0);
    }

    fn arb_cmp() -> impl Strategy<Value = Comparator> {
        prop::sample::select(vec![Comparator::Gt, Comparator::Ge, Comparator::Lt, Comparator::Le])
    }

    proptest! {
        #[test]
        fn no_false_fires(
            values in prop::collection::vec(0.0f64..100.0, 0..40),
            cmp in arb_cmp(),
            threshold in 0.0f64..100.0,
        ) {
            let pts: Vec<_> = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut p = point(*v, "2024-03-01T00:00:00Z");
                    p.window = window_for(ts("2024-03-01T00:00:00Z") + Duration::days(i as i64), WindowGranularity::Daily);
                    p
                })
                .collect();
            let mut h = FireHistory::default();
            for e in evaluate(&pts, &[rule(cmp, threshold, 0)], &mut h, ts("2024-04-01T00:00:00Z")) {
                prop_assert!(cmp.holds(e.point.value.as_number().unwrap(), threshold));
                prop_assert_eq!(e.point.scope.clone(), Scope::Platform(crate::domain::Platform::new("android").unwrap()));
            }
        }

        #[test]
        fn fires_respect_cooldown(
            steps in prop::collection::vec((0i64..7200, prop::bool::ANY), 1..60),
            cooldown in 0u64..5000,
        ) {
            let r = [rule(Comparator::Gt, 5.0, cooldown)];
            let mut h = FireHistory::default();
            let mut now = ts("2024-04-01T00:00:00Z");
            let mut fires = Vec::new();
            for (gap, breach) in steps {
                now += Duration::seconds(gap);
                let p = point(if breach { 9.0 } else { 1.0 }, "2024-03-09T00:00:00Z");
                fires.extend(evaluate(&[p], &r, &mut h, now).into_iter().map(|e| e.fired_at));
            }
            for pair in fires.windows(2) {
                prop_assert!(pair[1] - pair[0] >= Duration::seconds(cooldown as i64));
            }
        }
    }
}
