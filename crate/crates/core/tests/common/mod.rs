#![allow(dead_code)]

use pgs_core::experiment::{highway_matrix, SolverSettings};
use pgs_core::radio::RateMatrix;
use pgs_core::scenario::{default_paper_scenario, QualityLadder, Scenario, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Duration;

/// The single-cell evaluation scenario with 10 s slots over 160 s: one
/// segment per slot and a one-slot minimum sleep, so exact solves stay
/// small while users still cross the whole cell.
pub fn desk() -> Scenario {
    let mut s = default_paper_scenario();
    s.time = TimeGrid::new(10.0, 160.0, 10.0).unwrap();
    s.base_stations[0].n_off = 1;
    s
}

/// Desk scenario with every vehicle in its own group, 60 s apart.
pub fn sparse_desk() -> Scenario {
    let mut s = desk();
    s.highway.group_size = 1;
    s
}

pub fn desk_matrix(s: &Scenario, users: usize) -> RateMatrix {
    highway_matrix(s, users).unwrap()
}

/// Exact solves without the binary-count guard.
pub fn unguarded() -> SolverSettings {
    SolverSettings {
        milp_time_limit: Duration::from_secs(600),
        max_binaries: usize::MAX,
        ..SolverSettings::default()
    }
}

/// One cell, six 1 s slots, two 3 s segments, two quality levels.
pub fn tiny(l_req: usize) -> Scenario {
    let mut s = default_paper_scenario();
    s.time = TimeGrid::new(1.0, 6.0, 3.0).unwrap();
    s.ladder = QualityLadder::new(vec![0.25e6, 0.5e6], l_req).unwrap();
    s.base_stations[0].n_off = 2;
    s
}

/// Random single-cell rates for `users` users; the second user may arrive
/// after the first segment.
pub fn random_tiny_matrix(rng: &mut ChaCha8Rng, users: usize, slots: usize) -> RateMatrix {
    let rates = (0..users)
        .map(|i| {
            let arrival = if i > 0 && rng.random_bool(0.3) { 3 } else { 0 };
            (0..slots)
                .map(|n| if n < arrival { 0.0 } else { rng.random_range(0.4e6..4e6) })
                .collect()
        })
        .collect();
    RateMatrix::single_cell(rates)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
