//! Shared fixtures for the benchmarks.

use grngc_core::data::{make_windows, simulate_lorenz96, standardize, Lorenz96Config};
use grngc_core::forecast::{Backbone, BackboneKind, SplineSpec};
use grngc_core::WindowedDataset;

/// Standardized Lorenz-96 windows (`lag` 5) and a freshly initialized
/// backbone of the default width for them.
pub fn lorenz_fixture(p: usize, t: usize, kind: BackboneKind) -> (Backbone, WindowedDataset) {
    let (series, _) = simulate_lorenz96(&Lorenz96Config {
        p,
        t,
        ..Default::default()
    })
    .expect("valid generator config");
    let (scaled, _) = standardize(&series).expect("non-constant series");
    let data = make_windows(&scaled, 5).expect("series longer than lag");
    let backbone = Backbone::init(kind, &[5 * p, 128, p], SplineSpec::default(), 0).expect("valid sizes");
    (backbone, data)
}
