//! Fixtures shared by the criterion benchmarks.

use ngain_core::harness::simulate_cohort;
use ngain_core::{preset, LatentCohort, ObservedCohort, ScenarioSpec};

/// `main` preset resized to `n` learners.
pub fn scenario(n: usize) -> ScenarioSpec {
    let mut spec = preset("main").expect("main preset");
    spec.n = n;
    spec
}

pub fn observed_cohort(n: usize, reliability: f64) -> (LatentCohort, ObservedCohort) {
    simulate_cohort(&scenario(n), reliability, 17).expect("valid scenario")
}

/// Small sweep for timing the replication loop.
pub fn sweep_scenario(replications: usize, grid_points: usize) -> ScenarioSpec {
    let mut spec = scenario(100);
    spec.replications = replications;
    spec.reliability_grid = (0..grid_points)
        .map(|i| 0.7 + 0.3 * i as f64 / (grid_points.max(2) - 1) as f64)
        .collect();
    spec
}
