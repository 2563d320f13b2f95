//! Engine output against the brute-force oracle on random event sets.

use devpulse_core::domain::PlatformSet;
use devpulse_core::metrics::{EngineConfig, ExecutionMode};
use devpulse_core::Engine;
use devpulse_testkit::{compare_with_engine, random_event_set, sample_windows, EventSetParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const REL: f64 = 1e-9;

fn run(sets: usize, seed: u64, mode: ExecutionMode) -> usize {
    let params = EventSetParams::default();
    let engine = Engine::new(EngineConfig::default(), PlatformSet::new(&params.platforms).unwrap()).with_mode(mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = 0;
    for i in 0..sets {
        let events = random_event_set(&mut rng, &params);
        let windows = sample_windows(&mut rng, &params, 8);
        match compare_with_engine(&engine, &events, &windows, REL) {
            Ok(n) => cells += n,
            Err(m) => panic!("set {i}: {} mismatches, first: {:#?}", m.len(), &m[..m.len().min(3)]),
        }
    }
    cells
}

#[test]
fn random_sets_match_oracle_sequential() {
    assert!(run(500, 11, ExecutionMode::Sequential) > 0);
}

#[test]
fn random_sets_match_oracle_default_mode() {
    assert!(run(500, 12, ExecutionMode::default()) > 0);
}
