//! Cron-driven connector jobs with retry/backoff, per-source mutual
//! exclusion and bounded parallelism.
//!
//! All time goes through a [`Clock`], so retries and firings can be driven
//! by a [`crate::ManualClock`] in tests. A failed run never touches the
//! source's watermark or raw data; the last good fetch stays in place until
//! the next scheduled firing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerting::{JobFailure, Notification, Notifier};
use crate::clock::Clock;
use crate::connectors::{check_credentials, Connector, FetchOutcome, SourceDescriptor, Watermark};
use crate::domain::Timestamp;
use crate::storage::Store;

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("invalid retry policy: {0}")]
    Policy(String),
    #[error("source {0:?} registered twice")]
    DuplicateSource(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("source {0:?} is already running")]
    Busy(String),
    #[error("scheduler state {path}: {reason}")]
    State { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 1000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(1..=5).contains(&self.max_attempts) {
            return Err(SchedulerError::Policy("max-attempts must be within 1..=5".into()));
        }
        if self.base_delay_ms == 0 {
            return Err(SchedulerError::Policy("base-delay-ms must be positive".into()));
        }
        if !(self.multiplier.is_finite() && self.multiplier > 1.0) {
            return Err(SchedulerError::Policy("multiplier must be > 1".into()));
        }
        Ok(())
    }

    /// Wait after the `n`-th failed attempt: base × multiplier^(n−1).
    pub fn delay(&self, n: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.multiplier.powi(n.saturating_sub(1) as i32);
        Duration::from_secs_f64(ms / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Succeeded,
    /// Every attempt failed.
    Exhausted,
    /// Every attempt failed and the last one was rate limited.
    RateDeferred,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Attempt {
    pub number: u32,
    pub started_at: Timestamp,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct JobRun {
    pub source_id: String,
    pub scheduled_at: Timestamp,
    pub attempts: Vec<Attempt>,
    pub final_status: RunStatus,
    pub finished_at: Timestamp,
    /// Raw records newly stored (new keys or new versions).
    pub stored: usize,
}

/// Result of [`run_job`]: the run plus the watermark to keep.
#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub run: JobRun,
    /// The advanced watermark after a success; `None` after a failed run.
    pub watermark: Option<Watermark>,
}

/// Runs one job with retries. Records are written only after a successful
/// fetch, so failed attempts leave the store untouched.
pub fn run_job(
    source: &SourceDescriptor,
    policy: &RetryPolicy,
    clock: &dyn Clock,
    connector: &dyn Connector,
    store: &Store,
    watermark: Option<&Watermark>,
    scheduled_at: Timestamp,
) -> JobOutcome {
    let mut attempts = Vec::new();
    let mut n = 0;
    loop {
        n += 1;
        let started_at = clock.now();
        let outcome = connector.fetch(source, watermark, started_at);
        let mut attempt = Attempt {
            number: n,
            started_at,
            outcome: outcome.label().to_string(),
            detail: None,
        };
        let wait = match outcome {
            FetchOutcome::Success { records, watermark } => {
                match store_all(store, records) {
                    Ok(stored) => {
                        attempts.push(attempt);
                        log::info!("{}: stored {stored} records in {n} attempt(s)", source.source_id);
                        return JobOutcome {
                            run: JobRun {
                                source_id: source.source_id.clone(),
                                scheduled_at,
                                attempts,
                                final_status: RunStatus::Succeeded,
                                finished_at: clock.now(),
                                stored,
                            },
                            watermark: Some(watermark),
                        };
                    }
                    Err(e) => {
                        attempt.outcome = "store-failure".into();
                        attempt.detail = Some(e);
                        policy.delay(n)
                    }
                }
            }
            FetchOutcome::TransientFailure(reason) | FetchOutcome::PermanentFailure(reason) => {
                attempt.detail = Some(reason);
                policy.delay(n)
            }
            FetchOutcome::RateLimited(retry_after) => {
                attempt.detail = Some(format!("retry after {}s", retry_after.as_secs_f64()));
                retry_after.max(policy.delay(n))
            }
        };
        log::warn!(
            "{}: attempt {n} {}{}",
            source.source_id,
            attempt.outcome,
            attempt.detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default()
        );
        let rate_limited = attempt.outcome == "rate-limited";
        attempts.push(attempt);
        if n >= policy.max_attempts {
            return JobOutcome {
                run: JobRun {
                    source_id: source.source_id.clone(),
                    scheduled_at,
                    attempts,
                    final_status: if rate_limited {
                        RunStatus::RateDeferred
                    } else {
                        RunStatus::Exhausted
                    },
                    finished_at: clock.now(),
                    stored: 0,
                },
                watermark: None,
            };
        }
        clock.sleep(wait);
    }
}

fn store_all(store: &Store, records: Vec<crate::storage::RawRecord>) -> Result<usize, String> {
    let mut stored = 0;
    for r in records {
        if store.append_raw(r).map_err(|e| e.to_string())?.stored() {
            stored += 1;
        }
    }
    Ok(stored)
}

/// Persisted scheduler state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SchedulerState {
    #[serde(default)]
    pub watermarks: BTreeMap<String, Watermark>,
    #[serde(default)]
    pub last_tick: Option<Timestamp>,
}

impl SchedulerState {
    pub fn load(path: &Path) -> Result<Self, SchedulerError> {
        let err = |reason: String| SchedulerError::State {
            path: path.to_path_buf(),
            reason,
        };
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| err(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(err(e.to_string())),
        }
    }

    /// Writes through a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<(), SchedulerError> {
        let err = |reason: String| SchedulerError::State {
            path: path.to_path_buf(),
            reason,
        };
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        fs::write(&tmp, text).map_err(|e| err(e.to_string()))?;
        fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Skip {
    pub source_id: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    pub policy: RetryPolicy,
    /// Maximum jobs run at once by [`Scheduler::run_due`].
    pub parallelism: usize,
    /// Pause between consecutive job starts on one worker.
    pub pacing: Duration,
    /// Fire every source on the first tick instead of waiting for its
    /// schedule.
    pub run_on_start: bool,
    pub state_path: Option<PathBuf>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            policy: RetryPolicy::default(),
            parallelism: 4,
            pacing: Duration::ZERO,
            run_on_start: false,
            state_path: None,
        }
    }
}

struct Registered {
    descriptor: SourceDescriptor,
    connector: Arc<dyn Connector>,
}

/// Permission to run one source. Dropping it releases the source.
pub struct Ticket {
    source_id: String,
    scheduled_at: Timestamp,
    running: Arc<Mutex<BTreeSet<String>>>,
}

impl Ticket {
    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn scheduled_at(&self) -> Timestamp {
        self.scheduled_at
    }
}

impl Drop for Ticket {
    fn drop(&mut self) {
        self.running.lock().remove(&self.source_id);
    }
}

pub struct Scheduler {
    sources: BTreeMap<String, Registered>,
    config: SchedulerConfig,
    clock: Arc<dyn Clock>,
    store: Arc<Store>,
    notifier: Arc<Notifier>,
    state: Mutex<SchedulerState>,
    running: Arc<Mutex<BTreeSet<String>>>,
    runs: Mutex<Vec<JobRun>>,
    skips: Mutex<Vec<Skip>>,
}

impl Scheduler {
    pub fn new(
        config: SchedulerConfig,
        clock: Arc<dyn Clock>,
        store: Arc<Store>,
        notifier: Arc<Notifier>,
    ) -> Result<Self, SchedulerError> {
        config.policy.validate()?;
        let state = match &config.state_path {
            Some(p) => SchedulerState::load(p)?,
            None => SchedulerState::default(),
        };
        Ok(Self {
            sources: BTreeMap::new(),
            config,
            clock,
            store,
            notifier,
            state: Mutex::new(state),
            running: Arc::new(Mutex::new(BTreeSet::new())),
            runs: Mutex::new(Vec::new()),
            skips: Mutex::new(Vec::new()),
        })
    }

    pub fn register(
        &mut self,
        descriptor: SourceDescriptor,
        connector: Arc<dyn Connector>,
    ) -> Result<(), SchedulerError> {
        let id = descriptor.source_id.clone();
        if self.sources.contains_key(&id) {
            return Err(SchedulerError::DuplicateSource(id));
        }
        self.sources.insert(id, Registered { descriptor, connector });
        Ok(())
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.sources.keys().cloned().collect()
    }

    pub fn watermark(&self, source_id: &str) -> Option<Watermark> {
        self.state.lock().watermarks.get(source_id).cloned()
    }

    pub fn state(&self) -> SchedulerState {
        self.state.lock().clone()
    }

    pub fn runs(&self) -> Vec<JobRun> {
        self.runs.lock().clone()
    }

    pub fn skips(&self) -> Vec<Skip> {
        self.skips.lock().clone()
    }

    fn claim(&self, source_id: &str, scheduled_at: Timestamp) -> Option<Ticket> {
        let mut running = self.running.lock();
        if !running.insert(source_id.to_string()) {
            return None;
        }
        Some(Ticket {
            source_id: source_id.to_string(),
            scheduled_at,
            running: self.running.clone(),
        })
    }

    /// Tickets for every source whose schedule fired in `(last-tick, now]`.
    /// Several missed firings of one source yield a single ticket; a source
    /// that is still running is skipped and the skip recorded.
    pub fn tick(&self, now: Timestamp) -> Vec<Ticket> {
        let last = {
            let mut state = self.state.lock();
            let last = state.last_tick;
            state.last_tick = Some(last.map_or(now, |l| l.max(now)));
            last
        };
        let mut due = Vec::new();
        for (id, src) in &self.sources {
            let fires = match last {
                Some(last) => src.descriptor.schedule.fires_between(last, now),
                None => self.config.run_on_start,
            };
            if !fires {
                continue;
            }
            match self.claim(id, now) {
                Some(t) => due.push(t),
                None => {
                    log::info!("{id} still running at {now}, firing skipped");
                    self.skips.lock().push(Skip {
                        source_id: id.clone(),
                        at: now,
                    });
                }
            }
        }
        self.persist();
        due
    }

    /// Claims a source for an immediate run outside its schedule.
    pub fn claim_now(&self, source_id: &str) -> Result<Ticket, SchedulerError> {
        if !self.sources.contains_key(source_id) {
            return Err(SchedulerError::UnknownSource(source_id.to_string()));
        }
        self.claim(source_id, self.clock.now())
            .ok_or_else(|| SchedulerError::Busy(source_id.to_string()))
    }

    /// Runs the job a ticket grants, then releases the source.
    pub fn execute(&self, ticket: Ticket) -> JobRun {
        let src = &self.sources[&ticket.source_id];
        let watermark = self.watermark(&ticket.source_id);
        let outcome = run_job(
            &src.descriptor,
            &self.config.policy,
            self.clock.as_ref(),
            src.connector.as_ref(),
            &self.store,
            watermark.as_ref(),
            ticket.scheduled_at,
        );
        if let Some(w) = outcome.watermark {
            self.state.lock().watermarks.insert(ticket.source_id.clone(), w);
            self.persist();
        } else {
            let last = outcome.run.attempts.last().expect("at least one attempt");
            self.notifier.notify_failure(&Notification::JobFailed(JobFailure {
                source_id: ticket.source_id.clone(),
                scheduled_at: ticket.scheduled_at,
                status: match outcome.run.final_status {
                    RunStatus::RateDeferred => "rate-deferred".into(),
                    _ => "exhausted".into(),
                },
                attempts: outcome.run.attempts.len(),
                last_error: last.detail.clone().unwrap_or_else(|| last.outcome.clone()),
            }));
        }
        self.runs.lock().push(outcome.run.clone());
        drop(ticket);
        outcome.run
    }

    /// Runs several tickets with at most `parallelism` at a time. Results
    /// come back in ticket order.
    pub fn execute_all(&self, tickets: Vec<Ticket>) -> Vec<JobRun> {
        let n = tickets.len();
        let queue: Mutex<VecDeque<(usize, Ticket)>> =
            Mutex::new(tickets.into_iter().enumerate().collect());
        let results: Mutex<Vec<Option<JobRun>>> = Mutex::new(vec![None; n]);
        let workers = self.config.parallelism.clamp(1, n.max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| {
                    let mut first = true;
                    loop {
                        let Some((i, ticket)) = queue.lock().pop_front() else { break };
                        if !first && !self.config.pacing.is_zero() {
                            self.clock.sleep(self.config.pacing);
                        }
                        first = false;
                        let run = self.execute(ticket);
                        results.lock()[i] = Some(run);
                    }
                });
            }
        });
        results
            .into_inner()
            .into_iter()
            .map(|r| r.expect("every ticket executed"))
            .collect()
    }

    /// `tick(now)` followed by running everything that came due.
    pub fn run_due(&self, now: Timestamp) -> Vec<JobRun> {
        let tickets = self.tick(now);
        self.execute_all(tickets)
    }

    /// Sends a warning for every source whose credential expires within
    /// `horizon`. Returns the number of warnings.
    pub fn check_credentials(&self, now: Timestamp, horizon: chrono::Duration) -> usize {
        let mut n = 0;
        for src in self.sources.values() {
            if let Some(w) = check_credentials(&src.descriptor, now, horizon) {
                self.notifier.notify_failure(&Notification::CredentialExpiring(w));
                n += 1;
            }
        }
        n
    }

    fn persist(&self) {
        if let Some(path) = &self.config.state_path {
            let state = self.state.lock().clone();
            if let Err(e) = state.save(path) {
                log::error!("{e}");
            }
        }
    }
}
