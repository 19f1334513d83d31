//! Fixtures shared by the benchmarks.

use switchback_core::dynamics::multi_unit_instance;
use switchback_core::{Clustering, ExposureProbabilities, ExposureSpec, FneThreshold, Instance};

/// Line-graph instance with hop radius 2 and the clustered design used in
/// the scaling presets.
pub struct LineFixture {
    pub instance: Instance,
    pub spec: ExposureSpec,
    pub probs: ExposureProbabilities,
}

pub fn line_fixture<R: rand::Rng + ?Sized>(n_units: usize, horizon: usize, ell: usize, r: usize, rng: &mut R) -> LineFixture {
    let instance = multi_unit_instance(n_units, horizon, 30, 2, rng).expect("valid sizes");
    let clustering = Clustering::line_segments(n_units, 2).expect("valid width");
    let spec = ExposureSpec::new(r, FneThreshold::EXACT, ell, clustering).expect("valid spec");
    let probs = ExposureProbabilities::compute(instance.graph(), &spec, horizon).expect("compatible");
    LineFixture { instance, spec, probs }
}
