//! Shared fixtures for the criterion benchmarks.

use stochprof::pool_model::sample_pools;
use stochprof::{Dataset, ModelSpec, ParameterSet, PoolSizeVector};

/// The two-population LN-LN example with 10-cell pools.
pub fn two_population_example() -> (ModelSpec, ParameterSet) {
    (
        ModelSpec::ln_ln(2).expect("valid spec"),
        ParameterSet::ln_ln(&[0.62, 0.38], &[0.47, -0.87], 0.03),
    )
}

pub fn simulated_dataset(samples: usize, pool_size: usize, seed: u64) -> Dataset {
    let (spec, params) = two_population_example();
    let sizes = PoolSizeVector::homogeneous(pool_size, samples).expect("positive pool size");
    sample_pools(seed, &sizes, &spec, &params, 1)
        .expect("valid parameters")
        .dataset
}
