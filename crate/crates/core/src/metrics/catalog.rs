//! Machine-readable metric catalog shared by the query API, dashboards and
//! alert configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{DeveloperArea, MetricId, MetricKind, WindowGranularity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

/// Threshold band for one metric: `warn` marks the start of the amber zone,
/// `critical` the red one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Target {
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warn: Option<f64>,
    pub critical: f64,
}

/// Targets used when configuration does not provide any.
pub fn default_targets() -> BTreeMap<MetricId, Target> {
    BTreeMap::from([(
        MetricId::UserCrashRate,
        Target {
            direction: Direction::LowerIsBetter,
            warn: Some(2.0),
            critical: 5.0,
        },
    )])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CatalogEntry {
    pub metric_id: MetricId,
    pub name: &'static str,
    pub area: DeveloperArea,
    pub kind: MetricKind,
    pub unit: &'static str,
    pub definition: &'static str,
    pub granularities: Vec<WindowGranularity>,
    pub team_scope: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
}

pub fn definition(id: MetricId) -> &'static str {
    use MetricId::*;
    match id {
        LeadTimeForChanges => {
            "Median hours from commit to the first successful production deployment containing it"
        }
        PrCycleTime => "Median hours from pull request creation to merge",
        CommitFrequency => "Main-branch commits per active developer per day",
        BuildInducedLatency => "Median hours from trigger to completion of PR-feedback CI builds",
        PrThroughput => "Merged pull requests per week",
        CopilotAcceptanceRate => "Percent of coding-assistant suggestions accepted",
        Stability => "Percent of users who experienced no crash",
        UserCrashRate => "Percent of sessions that ended in a crash",
        BlockerCriticalOpen => "Open bugs of blocker or critical priority at window end",
        BugMix => "Open bugs per priority at window end",
        DeploymentFrequency => "Successful production deployments per week",
        MainFailRate => "Percent of main-branch builds that failed",
        AvgTurnaroundTime => "Mean hours from trigger to completion of successful builds",
        AutomationCoverage => "Percent of statements covered by automated tests",
        AutomationHealth => "Percent of automated test suites passing",
        AutomationStatus => "Testable issues by automation status at window end",
        Mau => "Distinct monthly active users",
        RollingMau => "Trailing mean of monthly active users indexed to the baseline month (= 100)",
    }
}

pub fn entry(id: MetricId, targets: &BTreeMap<MetricId, Target>) -> CatalogEntry {
    let granularities = match id {
        MetricId::Mau | MetricId::RollingMau => vec![WindowGranularity::Monthly],
        _ => WindowGranularity::ALL.to_vec(),
    };
    CatalogEntry {
        metric_id: id,
        name: id.display_name(),
        area: id.area(),
        kind: id.kind(),
        unit: id.unit(),
        definition: definition(id),
        granularities,
        team_scope: id.supports_team_scope(),
        target: targets.get(&id).copied(),
    }
}

/// Catalog entries for the metrics `include` admits, in catalog order.
pub fn document(
    targets: &BTreeMap<MetricId, Target>,
    include: impl Fn(MetricId) -> bool,
) -> Vec<CatalogEntry> {
    MetricId::ALL
        .iter()
        .copied()
        .filter(|id| include(*id))
        .map(|id| entry(id, targets))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_catalog_lists_every_metric() {
        let doc = document(&default_targets(), |_| true);
        assert_eq!(doc.len(), 18);
        let json = serde_json::to_value(&doc).unwrap();
        assert_eq!(json[0]["metric-id"], "lead-time-for-changes");
        let crash = doc.iter().find(|e| e.metric_id == MetricId::UserCrashRate).unwrap();
        assert_eq!(crash.target.unwrap().critical, 5.0);
    }
}
