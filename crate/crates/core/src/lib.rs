//! Core of the devpulse engineering-intelligence platform.
//!
//! Telemetry flows through the crate in one direction:
//!
//! ```text
//! connectors --> scheduler --> storage (raw) --> metrics --> storage (processed) --> alerting
//! ```
//!
//! The HTTP surfaces (ingest and query) live in `devpulse-server`; the binary
//! lives in `devpulse-cli`.

pub mod access;
pub mod alerting;
pub mod clock;
pub mod config;
pub mod connectors;
pub mod cron;
pub mod domain;
pub mod metrics;
pub mod scenario;
pub mod scheduler;
pub mod storage;

pub use clock::{Clock, ManualClock, SystemClock};
pub use domain::{
    EngineeringEvent, MetricId, MetricKind, Platform, PlatformSet, Scope, ScopeSelector,
    TimeWindow, Timestamp, WindowGranularity,
};
pub use metrics::{ComputationRequest, Engine, EngineConfig, ExecutionMode, ProcessingReport};
pub use storage::{MetricPoint, MetricValue, RawRecord, Store};
