//! Shared fixtures for the criterion benchmarks.

use depmix_core::{Chain, Dataset, Example, McmcConfig, ModelFamily, ModelOptions, ModelSpec};

/// Simulated data and a default-option spec for one family.
pub fn fixture(example: Example, n: usize, family: ModelFamily) -> (Dataset, ModelSpec) {
    let data = example.generate(n, 1).expect("example data");
    let spec = ModelSpec::build(family, &data, &ModelOptions::default()).expect("spec");
    (data, spec)
}

/// A short chain to feed the predictive benchmarks.
pub fn short_chain(data: &Dataset, spec: &ModelSpec, kept: usize) -> Chain {
    let cfg = McmcConfig::short(200 + 2 * kept, 200, 2, 1);
    depmix_core::fit(data, spec, &cfg).expect("fit")
}
