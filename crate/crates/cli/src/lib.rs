//! The `devpulse` command line: service, one-shot passes, scenario
//! generation and reports.

pub mod service;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use devpulse_core::access::SecretHash;
use devpulse_core::config::{Config, ConfigError};
use devpulse_core::scenario::{generate, preset, Preset};
use devpulse_core::scheduler::RunStatus;
use devpulse_core::storage::Namespace;
use devpulse_core::{Clock, MetricId, MetricValue, Scope, SystemClock, Timestamp, WindowGranularity};

use service::{alert_ledger_path, process_and_alert, AlertLedger, Service};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for bad input (flags, config), 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "devpulse", version, about = "Engineering metrics: ingest, compute, alert, serve")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, short, global = true, env = "DEVPULSE_CONFIG", default_value = "devpulse.json")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NamespaceArg {
    Raw,
    Processed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scheduler, processing, alerting and the HTTP APIs.
    Serve {
        /// Overrides `http.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Fetch from configured sources.
    Ingest {
        /// Source to fetch; all sources when omitted.
        #[arg(long)]
        source: Option<String>,
        /// Fetch now and exit instead of following the schedules.
        #[arg(long)]
        once: bool,
    },
    /// Recompute metric points from the raw store and evaluate alerts.
    Process {
        /// `FROM..TO` (dates or RFC 3339); the whole raw extent when omitted.
        #[arg(long)]
        window: Option<String>,
    },
    /// Write a synthetic scenario as fixture files.
    Generate {
        /// steady, incident or crash-spike.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print one metric series from the processed store.
    Report {
        #[arg(long)]
        metric: String,
        #[arg(long, default_value = "org")]
        scope: String,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value = "daily")]
        granularity: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Dump a store namespace as JSON lines.
    Export {
        #[arg(long, value_enum)]
        namespace: NamespaceArg,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the salted hash of a token secret for the config file.
    HashToken {
        #[arg(long)]
        salt: String,
        #[arg(long)]
        secret: String,
    },
    /// Validate the configuration file.
    Check,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let load = || Config::load(&cli.config);
    match cli.command {
        Command::Serve { bind } => serve(load()?, bind),
        Command::Ingest { source, once } => ingest(load()?, source, once, out),
        Command::Process { window } => process(load()?, window.as_deref(), out),
        Command::Generate { preset, out: dir, seed } => generate_fixtures(&preset, &dir, seed, out),
        Command::Report {
            metric,
            scope,
            from,
            to,
            granularity,
            format,
        } => {
            let q = ReportQuery::parse(&metric, &scope, from.as_deref(), to.as_deref(), &granularity)?;
            report(&load()?, &q, format, out)
        }
        Command::Export { namespace, out: file } => export(&load()?, namespace, file.as_deref(), out),
        Command::HashToken { salt, secret } => {
            let h = SecretHash::new(&salt, &secret);
            let doc = serde_json::json!({"salt": h.salt, "secret-sha256": h.secret_sha256});
            writeln!(out, "{doc}").map_err(runtime)
        }
        Command::Check => {
            let cfg = load()?;
            writeln!(out, "ok: {} sources, {} alert rules", cfg.sources.len(), cfg.alert_rules.len()).map_err(runtime)
        }
    }
}

/// Date (`YYYY-MM-DD`, midnight UTC) or RFC 3339 instant.
pub fn parse_instant(s: &str) -> Result<Timestamp, CliError> {
    devpulse_server::query::parse_instant(s).ok_or_else(|| CliError::Usage(format!("invalid date or instant {s:?}")))
}

/// `FROM..TO`, half-open.
pub fn parse_range(s: &str) -> Result<(Timestamp, Timestamp), CliError> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| CliError::Usage(format!("window {s:?} is not FROM..TO")))?;
    let (from, to) = (parse_instant(a)?, parse_instant(b)?);
    if from >= to {
        return Err(CliError::Usage(format!("window {s:?} is empty")));
    }
    Ok((from, to))
}

fn serve(cfg: Config, bind: Option<String>) -> Result<(), CliError> {
    let bind = bind.unwrap_or_else(|| cfg.http.bind.clone());
    let tick = std::time::Duration::from_secs(cfg.scheduler.tick_secs);
    let service = Arc::new(Service::new(cfg, Arc::new(SystemClock))?);
    let stop = Arc::new(AtomicBool::new(false));

    let worker = {
        let service = service.clone();
        let stop = stop.clone();
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                match service.cycle() {
                    Ok(r) if !r.runs.is_empty() || r.processed.is_some() => {
                        log::info!("cycle: {} runs, {} alerts", r.runs.len(), r.alerts)
                    }
                    Ok(_) => {}
                    Err(e) => log::error!("cycle failed: {e}"),
                }
                let deadline = std::time::Instant::now() + tick;
                while !stop.load(Ordering::Relaxed) && std::time::Instant::now() < deadline {
                    std::thread::sleep(std::time::Duration::from_millis(200));
                }
            }
        })
    };

    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    let result = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {bind}: {e}")))?;
        log::info!("listening on {bind}");
        let app = devpulse_server::router(service.state.clone());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("shutting down");
            })
            .await
            .map_err(runtime)
    });
    stop.store(true, Ordering::Relaxed);
    let _ = worker.join();
    result
}

fn ingest(cfg: Config, source: Option<String>, once: bool, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(s) = &source {
        if !cfg.sources.iter().any(|c| &c.source_id == s) {
            return Err(CliError::Usage(format!("unknown source {s:?}")));
        }
    }
    let service = Service::new(cfg, Arc::new(SystemClock))?;
    if !once {
        // Follow the schedules until interrupted; processing happens in `serve`.
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
        rt.spawn(async move {
            let _ = tokio::signal::ctrl_c().await;
            flag.store(true, Ordering::Relaxed);
        });
        while !stop.load(Ordering::Relaxed) {
            for run in service.scheduler.run_due(service.clock.now()) {
                if source.as_deref().is_none_or(|s| s == run.source_id) {
                    writeln!(out, "{}", serde_json::to_string(&run).expect("serialize")).map_err(runtime)?;
                }
            }
            std::thread::sleep(std::time::Duration::from_millis(500));
        }
        return Ok(());
    }
    let ids = match source {
        Some(s) => vec![s],
        None => service.scheduler.source_ids(),
    };
    let tickets = ids
        .iter()
        .map(|id| service.scheduler.claim_now(id).map_err(runtime))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = service.scheduler.execute_all(tickets);
    let mut failed = Vec::new();
    for run in &runs {
        writeln!(out, "{}", serde_json::to_string(run).expect("serialize")).map_err(runtime)?;
        if run.final_status != RunStatus::Succeeded {
            failed.push(run.source_id.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("ingestion failed for {}", failed.join(", "))))
    }
}

fn process(cfg: Config, window: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let range = window.map(parse_range).transpose()?;
    let store = cfg.open_store().map_err(runtime)?;
    let ledger = AlertLedger::load(Some(alert_ledger_path(&cfg)))?;
    let (report, fired) = process_and_alert(
        &cfg.engine(),
        &store,
        &cfg.metrics.granularities,
        range,
        &cfg.alert_rules,
        &ledger,
        &cfg.notifier(),
        SystemClock.now(),
    )?;
    let doc = serde_json::json!({
        "report": report,
        "alerts": fired.iter().map(|a| a.message.clone()).collect::<Vec<_>>(),
    });
    writeln!(out, "{doc}").map_err(runtime)
}

fn generate_fixtures(name: &str, dir: &Path, seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let p: Preset = name.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    let mut spec = preset(p);
    if let Some(s) = seed {
        spec.seed = s;
    }
    let fixtures = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    fixtures.write_to(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let doc = serde_json::json!({
        "preset": name,
        "seed": spec.seed,
        "start": spec.start,
        "days": spec.days,
        "platforms": spec.platforms,
        "sources": fixtures.source_ids(),
        "files": fixtures.files.len(),
        "events": fixtures.event_count(),
    });
    writeln!(out, "{doc}").map_err(runtime)
}

#[derive(Debug, Clone)]
pub struct ReportQuery {
    pub metric: MetricId,
    pub scope: Scope,
    pub from: Timestamp,
    pub to: Timestamp,
    pub granularity: WindowGranularity,
}

impl ReportQuery {
    pub fn parse(metric: &str, scope: &str, from: Option<&str>, to: Option<&str>, granularity: &str) -> Result<Self, CliError> {
        let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
        let q = Self {
            metric: metric.parse().map_err(|e| usage(&e))?,
            scope: scope.parse().map_err(|e| usage(&e))?,
            from: from.map(parse_instant).transpose()?.unwrap_or(Timestamp::MIN_UTC),
            to: to.map(parse_instant).transpose()?.unwrap_or(Timestamp::MAX_UTC),
            granularity: granularity.parse().map_err(|e| usage(&e))?,
        };
        if q.from >= q.to {
            return Err(CliError::Usage("--from must be before --to".into()));
        }
        Ok(q)
    }
}

fn value_cell(v: &MetricValue) -> String {
    match v {
        MetricValue::Number(n) => n.to_string(),
        other => serde_json::to_string(other).expect("serialize"),
    }
}

pub fn report(cfg: &Config, q: &ReportQuery, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let store = cfg.open_store().map_err(runtime)?;
    let points = store.query_metric(q.metric, &q.scope, q.from, q.to, q.granularity);
    let rfc = |t: Timestamp| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    match format {
        Format::Json => {
            let rows: Vec<_> = points
                .iter()
                .map(|p| {
                    serde_json::json!({
                        "window-start": rfc(p.window.start()),
                        "window-end": rfc(p.window.end()),
                        "value": p.value.as_number().map_or_else(|| serde_json::to_value(&p.value).expect("serialize"), |n| n.into()),
                        "sample-size": p.sample_size,
                        "computed-at": rfc(p.computed_at),
                    })
                })
                .collect();
            let doc = serde_json::json!({
                "metric-id": q.metric,
                "scope": q.scope.to_string(),
                "granularity": q.granularity,
                "points": rows,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serialize")).map_err(runtime)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["window-start", "window-end", "value", "sample-size", "computed-at"])
                .map_err(runtime)?;
            for p in &points {
                w.write_record([
                    rfc(p.window.start()),
                    rfc(p.window.end()),
                    value_cell(&p.value),
                    p.sample_size.to_string(),
                    rfc(p.computed_at),
                ])
                .map_err(runtime)?;
            }
            w.flush().map_err(runtime)
        }
    }
}

fn export(cfg: &Config, namespace: NamespaceArg, file: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let store = cfg.open_store().map_err(runtime)?;
    let ns = match namespace {
        NamespaceArg::Raw => Namespace::Raw,
        NamespaceArg::Processed => Namespace::Processed,
    };
    match file {
        None => store.export(ns, out).map_err(runtime),
        Some(path) => {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
            );
            store.export(ns, &mut f).map_err(runtime)?;
            f.flush().map_err(runtime)
        }
    }
}
