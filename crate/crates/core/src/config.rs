//! The single JSON configuration file.
//!
//! Parse errors and semantic errors both name the offending key path
//! (e.g. `alert-rules[0].channel`). Relative paths resolve against the
//! directory holding the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{AccessPolicy, ApiToken, Principal, Role, TokenTable};
use crate::alerting::{validate_rules, AlertRule, FileSink, Notifier, Sink, StdoutSink, WebhookSink};
use crate::clock::Clock;
use crate::connectors::{Connector, FixtureConnector, HttpConnector, SourceDescriptor};
use crate::cron::CronSchedule;
use crate::domain::{MetricId, PlatformSet, Timestamp, WindowGranularity, YearMonth};
use crate::metrics::catalog::{default_targets, Target};
use crate::metrics::{Engine, EngineConfig, RollingMauConfig};
use crate::scheduler::{RetryPolicy, Scheduler, SchedulerConfig, SchedulerError};
use crate::storage::Store;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn at(key: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.to_string(),
        }
    }

    /// Key path of an invalid-config error.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            ConfigError::Read { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum ConnectorSpec {
    /// Reads `<root>/<source-id>/*.jsonl`; `root` defaults to `fixture-root`.
    Fixture {
        #[serde(default)]
        root: Option<PathBuf>,
    },
    Http {
        base_url: String,
        #[serde(default)]
        token: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SourceConfig {
    pub source_id: String,
    pub schedule: CronSchedule,
    #[serde(default)]
    pub credential_expiry: Option<Timestamp>,
    pub connector: ConnectorSpec,
}

impl SourceConfig {
    pub fn descriptor(&self) -> SourceDescriptor {
        SourceDescriptor {
            source_id: self.source_id.clone(),
            schedule: self.schedule.clone(),
            credential_expiry: self.credential_expiry,
        }
    }
}

fn default_parallelism() -> usize {
    4
}

fn default_tick_secs() -> u64 {
    60
}

fn default_warning_days() -> u32 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SchedulerSection {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub pacing_ms: u64,
    #[serde(default)]
    pub run_on_start: bool,
    #[serde(default = "default_tick_secs")]
    pub tick_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_warning_days")]
    pub credential_warning_days: u32,
    /// Defaults to `<store-dir>/scheduler-state.json`.
    #[serde(default)]
    pub state_file: Option<PathBuf>,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            parallelism: default_parallelism(),
            pacing_ms: 0,
            run_on_start: false,
            tick_secs: default_tick_secs(),
            retry: RetryPolicy::default(),
            credential_warning_days: default_warning_days(),
            state_file: None,
        }
    }
}

fn default_main_branches() -> Vec<String> {
    vec!["main".to_string()]
}

fn default_granularities() -> Vec<WindowGranularity> {
    WindowGranularity::ALL.to_vec()
}

fn default_rolling_months() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RollingMauSection {
    #[serde(default = "default_rolling_months")]
    pub window_months: u32,
    #[serde(default)]
    pub baseline: Option<YearMonth>,
}

impl Default for RollingMauSection {
    fn default() -> Self {
        Self {
            window_months: default_rolling_months(),
            baseline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_main_branches")]
    pub main_branches: Vec<String>,
    #[serde(default = "default_granularities")]
    pub granularities: Vec<WindowGranularity>,
    #[serde(default)]
    pub rolling_mau: RollingMauSection,
    /// Threshold bands published in the catalog.
    #[serde(default)]
    pub targets: Option<BTreeMap<MetricId, Target>>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            main_branches: default_main_branches(),
            granularities: default_granularities(),
            rolling_mau: RollingMauSection::default(),
            targets: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinkKind {
    Stdout,
    File,
    Webhook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SinkConfig {
    pub name: String,
    pub kind: SinkKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub url: Option<String>,
}

fn default_body_limit() -> usize {
    4 * 1024 * 1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct IngestSection {
    #[serde(default = "default_body_limit")]
    pub max_body_bytes: usize,
    #[serde(default)]
    pub tokens: Vec<ApiToken>,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            max_body_bytes: default_body_limit(),
            tokens: Vec::new(),
        }
    }
}

fn default_ttl() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuerySection {
    #[serde(default = "default_ttl")]
    pub ttl_secs: u64,
    #[serde(default)]
    pub ttl_overrides: BTreeMap<MetricId, u64>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    #[serde(default)]
    pub roles: Vec<Role>,
    #[serde(default)]
    pub principals: Vec<Principal>,
}

impl Default for QuerySection {
    fn default() -> Self {
        Self {
            ttl_secs: default_ttl(),
            ttl_overrides: BTreeMap::new(),
            cors_origins: Vec::new(),
            roles: Vec::new(),
            principals: Vec::new(),
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1:8080".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HttpSection {
    #[serde(default = "default_bind")]
    pub bind: String,
}

impl Default for HttpSection {
    fn default() -> Self {
        Self { bind: default_bind() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Config {
    pub platforms: Vec<String>,
    pub store_dir: PathBuf,
    #[serde(default)]
    pub fixture_root: Option<PathBuf>,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub sinks: Vec<SinkConfig>,
    /// Sink receiving scheduler failures and credential warnings.
    #[serde(default)]
    pub failure_channel: Option<String>,
    #[serde(default)]
    pub alert_rules: Vec<AlertRule>,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub query: QuerySection,
    /// Board layout document served verbatim to dashboards.
    #[serde(default)]
    pub boards: serde_json::Value,
    #[serde(default)]
    pub http: HttpSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and validates `text`; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::at(if key == "." { "<root>".into() } else { key }, e.into_inner())
        })?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store_dir);
        if let Some(p) = &mut self.fixture_root {
            fix(p);
        }
        if let Some(p) = &mut self.scheduler.state_file {
            fix(p);
        }
        for s in &mut self.sources {
            if let ConnectorSpec::Fixture { root: Some(p) } = &mut s.connector {
                fix(p);
            }
        }
        for s in &mut self.sinks {
            if let Some(p) = &mut s.path {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        PlatformSet::new(&self.platforms).map_err(|e| ConfigError::at("platforms", e))?;
        if self.platforms.is_empty() {
            return Err(ConfigError::at("platforms", "at least one platform is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            if s.source_id.trim().is_empty() {
                return Err(ConfigError::at(format!("sources[{i}].source-id"), "must be non-empty"));
            }
            if !ids.insert(&s.source_id) {
                return Err(ConfigError::at(format!("sources[{i}].source-id"), "duplicate source id"));
            }
            if let ConnectorSpec::Fixture { root: None } = s.connector {
                if self.fixture_root.is_none() {
                    return Err(ConfigError::at(
                        format!("sources[{i}].connector.root"),
                        "no root given and no top-level fixture-root",
                    ));
                }
            }
        }
        self.scheduler
            .retry
            .validate()
            .map_err(|e| ConfigError::at("scheduler.retry", e))?;
        if self.scheduler.parallelism == 0 {
            return Err(ConfigError::at("scheduler.parallelism", "must be at least 1"));
        }
        if self.scheduler.tick_secs == 0 {
            return Err(ConfigError::at("scheduler.tick-secs", "must be at least 1"));
        }
        if self.metrics.main_branches.is_empty() {
            return Err(ConfigError::at("metrics.main-branches", "must not be empty"));
        }
        if self.metrics.granularities.is_empty() {
            return Err(ConfigError::at("metrics.granularities", "must not be empty"));
        }
        if self.metrics.rolling_mau.window_months == 0 {
            return Err(ConfigError::at("metrics.rolling-mau.window-months", "must be at least 1"));
        }
        let mut names = BTreeSet::new();
        for (i, s) in self.sinks.iter().enumerate() {
            if !names.insert(s.name.clone()) {
                return Err(ConfigError::at(format!("sinks[{i}].name"), "duplicate sink name"));
            }
            match s.kind {
                SinkKind::File if s.path.is_none() => {
                    return Err(ConfigError::at(format!("sinks[{i}].path"), "file sinks need a path"))
                }
                SinkKind::Webhook if s.url.is_none() => {
                    return Err(ConfigError::at(format!("sinks[{i}].url"), "webhook sinks need a url"))
                }
                _ => {}
            }
        }
        if let Some(ch) = &self.failure_channel {
            if !names.contains(ch) {
                return Err(ConfigError::at("failure-channel", format!("unknown sink {ch:?}")));
            }
        }
        if let Err(e) = validate_rules(&self.alert_rules, &names) {
            let idx = self
                .alert_rules
                .iter()
                .position(|r| r.validate(&names).is_err())
                .unwrap_or(0);
            return Err(ConfigError::at(format!("alert-rules[{idx}]"), e));
        }
        TokenTable::new(self.ingest.tokens.clone()).map_err(|e| ConfigError::at("ingest.tokens", e))?;
        if self.ingest.max_body_bytes == 0 {
            return Err(ConfigError::at("ingest.max-body-bytes", "must be positive"));
        }
        AccessPolicy::new(self.query.roles.clone(), self.query.principals.clone())
            .map_err(|e| ConfigError::at("query", e))?;
        Ok(())
    }

    pub fn platform_set(&self) -> PlatformSet {
        PlatformSet::new(&self.platforms).expect("validated")
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            main_branches: self.metrics.main_branches.clone(),
            rolling_mau: RollingMauConfig {
                window_months: self.metrics.rolling_mau.window_months,
                baseline: self.metrics.rolling_mau.baseline,
            },
        }
    }

    pub fn engine(&self) -> Engine {
        Engine::new(self.engine_config(), self.platform_set())
    }

    pub fn targets(&self) -> BTreeMap<MetricId, Target> {
        self.metrics.targets.clone().unwrap_or_else(default_targets)
    }

    pub fn open_store(&self) -> Result<Store, crate::storage::StoreError> {
        Store::open(&self.store_dir)
    }

    pub fn state_file(&self) -> PathBuf {
        self.scheduler
            .state_file
            .clone()
            .unwrap_or_else(|| self.store_dir.join("scheduler-state.json"))
    }

    pub fn notifier(&self) -> Notifier {
        let mut n = Notifier::new();
        for s in &self.sinks {
            let sink: Arc<dyn Sink> = match s.kind {
                SinkKind::Stdout => Arc::new(StdoutSink),
                SinkKind::File => Arc::new(FileSink::new(s.path.clone().expect("validated"))),
                SinkKind::Webhook => Arc::new(WebhookSink::new(s.url.clone().expect("validated"))),
            };
            n = n.with_sink(s.name.clone(), sink);
        }
        if let Some(ch) = &self.failure_channel {
            n = n.with_failure_channel(ch.clone());
        }
        n
    }

    pub fn connector(&self, source: &SourceConfig) -> Arc<dyn Connector> {
        match &source.connector {
            ConnectorSpec::Fixture { root } => {
                let root = root
                    .clone()
                    .or_else(|| self.fixture_root.clone())
                    .expect("validated");
                Arc::new(FixtureConnector::new(root, self.platform_set()))
            }
            ConnectorSpec::Http { base_url, token } => Arc::new(HttpConnector::new(
                base_url.clone(),
                token.clone(),
                self.platform_set(),
            )),
        }
    }

    pub fn scheduler(
        &self,
        clock: Arc<dyn Clock>,
        store: Arc<Store>,
        notifier: Arc<Notifier>,
    ) -> Result<Scheduler, SchedulerError> {
        let cfg = SchedulerConfig {
            policy: self.scheduler.retry,
            parallelism: self.scheduler.parallelism,
            pacing: Duration::from_millis(self.scheduler.pacing_ms),
            run_on_start: self.scheduler.run_on_start,
            state_path: Some(self.state_file()),
        };
        let mut s = Scheduler::new(cfg, clock, store, notifier)?;
        for src in &self.sources {
            s.register(src.descriptor(), self.connector(src))?;
        }
        Ok(s)
    }

    pub fn token_table(&self) -> TokenTable {
        TokenTable::new(self.ingest.tokens.clone()).expect("validated")
    }

    pub fn access_policy(&self) -> AccessPolicy {
        AccessPolicy::new(self.query.roles.clone(), self.query.principals.clone()).expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "platforms": ["android"],
        "store-dir": "store",
        "fixture-root": "fixtures",
        "sources": [{"source-id": "git", "schedule": "0 2 * * *", "connector": {"kind": "fixture"}}],
        "sinks": [{"name": "ops", "kind": "stdout"}],
        "alert-rules": [{"rule-id": "crash", "metric-id": "user-crash-rate", "scope": "*",
                         "comparator": "gt", "threshold": 5, "channel": "ops"}]
    }"#;

    #[test]
    fn minimal_config_with_defaults() {
        let cfg = Config::parse(MINIMAL, Path::new("/etc/devpulse")).unwrap();
        assert_eq!(cfg.store_dir, PathBuf::from("/etc/devpulse/store"));
        assert_eq!(cfg.scheduler.parallelism, 4);
        assert_eq!(cfg.scheduler.retry, RetryPolicy::default());
        assert_eq!(cfg.query.ttl_secs, 300);
        assert_eq!(cfg.state_file(), PathBuf::from("/etc/devpulse/store/scheduler-state.json"));
    }

    #[test]
    fn http_connector_fields_are_kebab_case() {
        let text = MINIMAL.replace(
            r#"{"kind": "fixture"}"#,
            r#"{"kind": "http", "base-url": "https://ci.example", "token": "t"}"#,
        );
        let cfg = Config::parse(&text, Path::new("/")).unwrap();
        assert_eq!(
            cfg.sources[0].connector,
            ConnectorSpec::Http {
                base_url: "https://ci.example".into(),
                token: Some("t".into())
            }
        );
    }

    fn key_of(text: &str) -> String {
        Config::parse(text, Path::new("/")).unwrap_err().key().unwrap().to_string()
    }

    #[test]
    fn errors_name_the_offending_key() {
        let bad_cron = MINIMAL.replace("0 2 * * *", "0 25 * * *");
        assert_eq!(key_of(&bad_cron), "sources[0].schedule");
        let bad_channel = MINIMAL.replace(r#""channel": "ops""#, r#""channel": "pager""#);
        assert_eq!(key_of(&bad_channel), "alert-rules[0]");
        let bad_metric = MINIMAL.replace("user-crash-rate", "crash-ratio");
        assert_eq!(key_of(&bad_metric), "alert-rules[0].metric-id");
        let unknown = MINIMAL.replace(r#""store-dir""#, r#""stroe-dir": 1, "store-dir""#);
        assert_eq!(key_of(&unknown), "stroe-dir");
        let bad_retry = MINIMAL.replace(
            r#""sinks""#,
            r#""scheduler": {"retry": {"max-attempts": 5, "base-delay-ms": 1000, "multiplier": 0.5}}, "sinks""#,
        );
        assert_eq!(key_of(&bad_retry), "scheduler.retry");
    }
}
