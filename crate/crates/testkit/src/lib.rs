//! Test support for devpulse: random event sets and a brute-force metric
//! oracle written independently of the engine.

pub mod gen;
pub mod oracle;
pub mod pipeline;

pub use gen::{random_event_set, sample_windows, EventSetParams};
pub use pipeline::ingest_scenario;
pub use oracle::{compare_with_engine, oracle_value, Mismatch, OracleValue};
