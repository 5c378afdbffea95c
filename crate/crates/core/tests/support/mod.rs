//! Shared case lists. Each suite file runs one list; the acceptance target
//! runs all of them.
#![allow(dead_code)]

pub mod equations;
pub mod gradients;
pub mod invariants;
pub mod oracles;

use std::panic::{self, AssertUnwindSafe};

use ndarray::Array2;
use pda_core::params::ParamStore;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Case = (&'static str, fn());

/// Runs every case and returns the names of those that panicked.
pub fn failures(cases: &[Case]) -> Vec<&'static str> {
    cases
        .iter()
        .filter(|(_, f)| panic::catch_unwind(AssertUnwindSafe(f)).is_err())
        .map(|(name, _)| *name)
        .collect()
}

pub fn run_all(cases: &[Case]) {
    let failed = failures(cases);
    assert!(failed.is_empty(), "failing cases: {failed:?}");
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

/// Overwrites every parameter with uniform noise in `±scale`.
pub fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (r, c) = store.value(id).dim();
        store.set(id, random_matrix(rng, r, c, scale));
    }
}

pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} differs from {b} by more than {tol}");
}

pub fn assert_all_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
    assert_eq!(a.dim(), b.dim(), "shape mismatch");
    for (x, y) in a.iter().zip(b) {
        assert_close(*x, *y, tol);
    }
}

/// A property runner with a fixed RNG so failures reproduce.
pub fn prop_runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}
