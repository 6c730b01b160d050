//! Shared fixtures for the benchmarks.

use psrkit::examples;
use psrkit::PomdpModel;

/// Bundled systems with the depths they are benchmarked at.
pub fn matrix_fixtures() -> Vec<(&'static str, PomdpModel, usize)> {
    vec![
        ("float-reset", examples::float_reset(), 5),
        ("fig6", examples::fig6_system(), 3),
        ("rotate-register-3", examples::rotate_register(3).expect("valid width"), 4),
    ]
}

/// Random POMDPs of growing size for the core-test search.
pub fn search_fixtures() -> Vec<(usize, PomdpModel)> {
    [2, 4, 8, 12]
        .into_iter()
        .map(|k| (k, examples::random_pomdp(k, 3, 3, k as u64)))
        .collect()
}
