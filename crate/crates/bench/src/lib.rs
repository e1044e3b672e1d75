//! Shared inputs for the benchmarks.

use std::sync::Arc;

use gridbesov::besov::DistCoeffs;
use gridbesov::experiments::{random_config, random_step_function, trial_rng};
use gridbesov::grid::{build_dyadic, build_random, build_uniform, RandomGridParams};
use gridbesov::haar::analyze;
use gridbesov::particles::config_coeffs;
use gridbesov::scalar::{ratio, Scalar};
use gridbesov::{GoodGrid, StepFunction};

pub const SEED: u64 = 0x5eed;

/// Dyadic, triadic and random grids of the given depth.
pub fn grids(depth: usize) -> Vec<(&'static str, Arc<GoodGrid>)> {
    let random = build_random(&RandomGridParams {
        seed: SEED,
        depth,
        max_children: 4,
        lambda: ratio(1, 2),
        lambda_star: ratio(1, 4),
    })
    .expect("feasible parameters");
    vec![
        ("dyadic", Arc::new(build_dyadic(depth))),
        ("triadic", Arc::new(build_uniform(depth, 3))),
        ("random", Arc::new(random)),
    ]
}

/// A random full-depth step function.
pub fn step<S: Scalar>(grid: &Arc<GoodGrid>) -> StepFunction<S> {
    random_step_function(grid, grid.depth(), &mut trial_rng(SEED, 0)).expect("level within depth")
}

/// Positive-smoothness coefficients of [`step`].
pub fn coeffs<S: Scalar>(grid: &Arc<GoodGrid>, s: f64) -> DistCoeffs<S> {
    analyze(&step::<S>(grid), s).expect("analysis of a valid step function")
}

/// Negative-smoothness coefficients of a random particle configuration,
/// truncated at the grid depth.
pub fn particles<S: Scalar>(grid: &Arc<GoodGrid>, s: f64) -> DistCoeffs<S> {
    let config = random_config::<S>(grid, &mut trial_rng(SEED, 1));
    config_coeffs(grid, &config, s, grid.depth()).expect("level within depth").coeffs
}
