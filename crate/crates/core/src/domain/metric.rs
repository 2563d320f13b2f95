use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeveloperArea {
    DeveloperProductivity,
    QualityReliability,
    OperationalEfficiency,
    AutomationTooling,
    Engagement,
}

/// Shape of a metric value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Number,
    Distribution,
    StatusTriple,
}

/// The closed metric catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricId {
    LeadTimeForChanges,
    PrCycleTime,
    CommitFrequency,
    BuildInducedLatency,
    PrThroughput,
    CopilotAcceptanceRate,
    Stability,
    UserCrashRate,
    BlockerCriticalOpen,
    BugMix,
    DeploymentFrequency,
    MainFailRate,
    AvgTurnaroundTime,
    AutomationCoverage,
    AutomationHealth,
    AutomationStatus,
    Mau,
    RollingMau,
}

impl MetricId {
    pub const ALL: [MetricId; 18] = [
        MetricId::LeadTimeForChanges,
        MetricId::PrCycleTime,
        MetricId::CommitFrequency,
        MetricId::BuildInducedLatency,
        MetricId::PrThroughput,
        MetricId::CopilotAcceptanceRate,
        MetricId::Stability,
        MetricId::UserCrashRate,
        MetricId::BlockerCriticalOpen,
        MetricId::BugMix,
        MetricId::DeploymentFrequency,
        MetricId::MainFailRate,
        MetricId::AvgTurnaroundTime,
        MetricId::AutomationCoverage,
        MetricId::AutomationHealth,
        MetricId::AutomationStatus,
        MetricId::Mau,
        MetricId::RollingMau,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::LeadTimeForChanges => "lead-time-for-changes",
            MetricId::PrCycleTime => "pr-cycle-time",
            MetricId::CommitFrequency => "commit-frequency",
            MetricId::BuildInducedLatency => "build-induced-latency",
            MetricId::PrThroughput => "pr-throughput",
            MetricId::CopilotAcceptanceRate => "copilot-acceptance-rate",
            MetricId::Stability => "stability",
            MetricId::UserCrashRate => "user-crash-rate",
            MetricId::BlockerCriticalOpen => "blocker-critical-open",
            MetricId::BugMix => "bug-mix",
            MetricId::DeploymentFrequency => "deployment-frequency",
            MetricId::MainFailRate => "main-fail-rate",
            MetricId::AvgTurnaroundTime => "avg-turnaround-time",
            MetricId::AutomationCoverage => "automation-coverage",
            MetricId::AutomationHealth => "automation-health",
            MetricId::AutomationStatus => "automation-status",
            MetricId::Mau => "mau",
            MetricId::RollingMau => "rolling-mau",
        }
    }

    pub fn kind(self) -> MetricKind {
        match self {
            MetricId::BugMix => MetricKind::Distribution,
            MetricId::AutomationStatus => MetricKind::StatusTriple,
            _ => MetricKind::Number,
        }
    }

    pub fn is_numeric(self) -> bool {
        self.kind() == MetricKind::Number
    }

    pub fn area(self) -> DeveloperArea {
        use MetricId::*;
        match self {
            LeadTimeForChanges | PrCycleTime | CommitFrequency | BuildInducedLatency
            | PrThroughput | CopilotAcceptanceRate => DeveloperArea::DeveloperProductivity,
            Stability | UserCrashRate | BlockerCriticalOpen | BugMix => {
                DeveloperArea::QualityReliability
            }
            DeploymentFrequency | MainFailRate | AvgTurnaroundTime => {
                DeveloperArea::OperationalEfficiency
            }
            AutomationCoverage | AutomationHealth | AutomationStatus => {
                DeveloperArea::AutomationTooling
            }
            Mau | RollingMau => DeveloperArea::Engagement,
        }
    }

    pub fn unit(self) -> &'static str {
        use MetricId::*;
        match self {
            LeadTimeForChanges | PrCycleTime | BuildInducedLatency | AvgTurnaroundTime => "hours",
            CommitFrequency => "commits/developer/day",
            PrThroughput => "prs/week",
            DeploymentFrequency => "deployments/week",
            CopilotAcceptanceRate | Stability | UserCrashRate | MainFailRate
            | AutomationCoverage | AutomationHealth | RollingMau => "percent",
            BlockerCriticalOpen | BugMix | AutomationStatus => "issues",
            Mau => "users",
        }
    }

    pub fn is_percent(self) -> bool {
        self.unit() == "percent"
    }

    pub fn is_duration(self) -> bool {
        self.unit() == "hours"
    }

    pub fn display_name(self) -> &'static str {
        use MetricId::*;
        match self {
            LeadTimeForChanges => "Lead Time for Changes",
            PrCycleTime => "PR Cycle Time",
            CommitFrequency => "Code Commit Frequency",
            BuildInducedLatency => "Build Induced Latency",
            PrThroughput => "PR Throughput",
            CopilotAcceptanceRate => "Co-pilot Acceptance Rate",
            Stability => "Stability",
            UserCrashRate => "User Crash Rate",
            BlockerCriticalOpen => "Blocker/Critical Bugs",
            BugMix => "Bug Mix",
            DeploymentFrequency => "Deployment Frequency",
            MainFailRate => "Main Fail Rate",
            AvgTurnaroundTime => "Average Turnaround Time",
            AutomationCoverage => "Automation Code Coverage",
            AutomationHealth => "Automation Health",
            AutomationStatus => "Test Automation Status",
            Mau => "Monthly Active Users",
            RollingMau => "Rolling MAU %",
        }
    }

    /// Metrics that can be broken down by team; the rest stop at platform.
    pub fn supports_team_scope(self) -> bool {
        matches!(self, MetricId::PrCycleTime | MetricId::PrThroughput)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| DomainError::UnknownMetric(s.to_string()))
    }
}
