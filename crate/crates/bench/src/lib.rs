//! Shared fixtures for the kernel benchmarks.

use yamabe_core::experiment::generate::gen_bandlimited;
use yamabe_core::{ConformalMetric, PeriodicGrid};

/// Smooth conformal factor on the unit 3-torus with `m` points per axis.
pub fn fixture(m: usize) -> ConformalMetric {
    let grid = PeriodicGrid::unit(3, m).expect("valid grid");
    ConformalMetric::flat(gen_bandlimited(&grid, 11, 0.2, 2).expect("valid data")).expect("positive factor")
}
