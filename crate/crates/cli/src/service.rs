//! The running service: scheduler ticks feed processing, processing feeds
//! alert evaluation, and alerts go to their sinks and the query API feed.

use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::Mutex;
use serde::Serialize;

use devpulse_core::alerting::{evaluate, AlertEvent, AlertRule, FireHistory, Notification, Notifier};
use devpulse_core::config::Config;
use devpulse_core::metrics::{ComputationRequest, EventSet};
use devpulse_core::scheduler::{JobRun, RunStatus, Scheduler};
use devpulse_core::{Clock, Engine, ProcessingReport, Store, Timestamp, WindowGranularity};
use devpulse_server::AppState;

use crate::CliError;

/// Persisted per-rule fire times, so cooldowns survive restarts and
/// one-shot `process` invocations.
pub struct AlertLedger {
    path: Option<PathBuf>,
    history: Mutex<FireHistory>,
}

impl AlertLedger {
    pub fn load(path: Option<PathBuf>) -> Result<Self, CliError> {
        let history = match &path {
            Some(p) => match std::fs::read_to_string(p) {
                Ok(text) => serde_json::from_str(&text)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => FireHistory::default(),
                Err(e) => return Err(CliError::Runtime(format!("{}: {e}", p.display()))),
            },
            None => FireHistory::default(),
        };
        Ok(Self {
            path,
            history: Mutex::new(history),
        })
    }

    /// Evaluates `rules` over `points` and persists the updated history.
    pub fn evaluate(&self, points: &[devpulse_core::MetricPoint], rules: &[AlertRule], now: Timestamp) -> Vec<AlertEvent> {
        let mut history = self.history.lock();
        let fired = evaluate(points, rules, &mut history, now);
        if !fired.is_empty() {
            if let Some(p) = &self.path {
                let text = serde_json::to_string_pretty(&*history).expect("history serializes");
                if let Err(e) = std::fs::write(p, text) {
                    log::error!("cannot persist alert history to {}: {e}", p.display());
                }
            }
        }
        fired
    }
}

pub fn alert_ledger_path(cfg: &Config) -> PathBuf {
    cfg.store_dir.join("alert-history.json")
}

/// Processes the store (optionally limited to `[from, to)`), then evaluates
/// alert rules over the points that changed and delivers what fired.
pub fn process_and_alert(
    engine: &Engine,
    store: &Store,
    granularities: &[WindowGranularity],
    range: Option<(Timestamp, Timestamp)>,
    rules: &[AlertRule],
    ledger: &AlertLedger,
    notifier: &Notifier,
    now: Timestamp,
) -> Result<(ProcessingReport, Vec<AlertEvent>), CliError> {
    let request = match range {
        None => None,
        Some((from, to)) => {
            let events = EventSet::from_snapshot(&store.snapshot_raw(), engine.platforms());
            Some(
                ComputationRequest::covering(&events, engine.platforms(), from, to, granularities)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
    };
    let report = engine
        .process(store, request.as_ref(), granularities)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    store.compact_processed().map_err(|e| CliError::Runtime(e.to_string()))?;
    let fired = ledger.evaluate(&report.changed, rules, now);
    for event in &fired {
        if let Err(e) = notifier.notify(&event.channel, &Notification::Alert(event.clone())) {
            log::error!("alert {} not delivered: {e}", event.rule_id);
        }
    }
    Ok((report, fired))
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CycleReport {
    pub at: Timestamp,
    pub runs: Vec<JobRun>,
    pub processed: Option<ProcessingReport>,
    pub alerts: usize,
    pub credential_warnings: usize,
}

/// Everything `serve` runs besides the HTTP listener.
pub struct Service {
    pub cfg: Config,
    pub clock: Arc<dyn Clock>,
    pub store: Arc<Store>,
    pub notifier: Arc<Notifier>,
    pub scheduler: Scheduler,
    pub state: Arc<AppState>,
    ledger: AlertLedger,
    last_credential_check: Mutex<Option<NaiveDate>>,
    /// Raw record count at the last processing pass.
    processed_at_len: Mutex<Option<usize>>,
}

impl Service {
    pub fn new(cfg: Config, clock: Arc<dyn Clock>) -> Result<Self, CliError> {
        let store = Arc::new(cfg.open_store().map_err(|e| CliError::Runtime(e.to_string()))?);
        let notifier = Arc::new(cfg.notifier());
        let scheduler = cfg
            .scheduler(clock.clone(), store.clone(), notifier.clone())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let state = Arc::new(AppState::from_config(&cfg, store.clone(), clock.clone()));
        let ledger = AlertLedger::load(Some(alert_ledger_path(&cfg)))?;
        Ok(Self {
            cfg,
            clock,
            store,
            notifier,
            scheduler,
            state,
            ledger,
            last_credential_check: Mutex::new(None),
            processed_at_len: Mutex::new(None),
        })
    }

    /// One pass: due ingestion jobs, a daily credential check, and, when the
    /// raw store grew (or on the first pass), processing and alerting.
    pub fn cycle(&self) -> Result<CycleReport, CliError> {
        let now = self.clock.now();
        let runs = self.scheduler.run_due(now);
        for run in &runs {
            match run.final_status {
                RunStatus::Succeeded => log::info!("{}: stored {} records", run.source_id, run.stored),
                status => log::warn!("{}: run {status:?} after {} attempts", run.source_id, run.attempts.len()),
            }
        }
        let credential_warnings = {
            let mut last = self.last_credential_check.lock();
            if *last != Some(now.date_naive()) {
                *last = Some(now.date_naive());
                let horizon = chrono::Duration::days(self.cfg.scheduler.credential_warning_days as i64);
                self.scheduler.check_credentials(now, horizon)
            } else {
                0
            }
        };
        // Pushes through the ingest API count as new data too.
        let raw_len = self.store.raw_len();
        let stale = self.processed_at_len.lock().replace(raw_len) != Some(raw_len);
        let (processed, alerts) = if stale {
            let (report, fired) = process_and_alert(
                &self.state.engine,
                &self.store,
                &self.cfg.metrics.granularities,
                None,
                &self.cfg.alert_rules,
                &self.ledger,
                &self.notifier,
                self.clock.now(),
            )?;
            let n = fired.len();
            self.state.record_alerts(fired);
            (Some(report), n)
        } else {
            (None, 0)
        };
        Ok(CycleReport {
            at: now,
            runs,
            processed,
            alerts,
            credential_warnings,
        })
    }
}
