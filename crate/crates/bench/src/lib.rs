//! Shared fixtures for the benchmarks.

use std::f64::consts::FRAC_PI_4;

use structsel_core::grid::{Field, GridSpec};
use structsel_core::observation::Observation;
use structsel_core::oracle_bench::{make_test_function, Family, FunctionSpec};
use structsel_core::selection::{ThetaGrid, ThetaGridConfig};

pub struct Fixture {
    pub grid: ThetaGrid,
    pub truth: Field,
    pub obs: Observation,
}

/// A d=2 single-index problem with `n` points per axis and `n_h` bandwidths.
pub fn fixture(n: usize, n_h: usize, eps: f64) -> Fixture {
    let spec = GridSpec::with_margin(2, n).expect("grid");
    let config = ThetaGridConfig {
        dim: 2,
        n_angles: 2,
        n_h,
        h_floor_cells: Some(2.0),
        ..Default::default()
    };
    let grid = ThetaGrid::build(&config, eps, spec).expect("theta grid");
    let f = make_test_function(&FunctionSpec {
        family: Family::SingleIndex,
        dim: 2,
        angles: vec![FRAC_PI_4],
        ..Default::default()
    })
    .expect("function");
    let truth = f.sample(spec).expect("sample");
    let obs = Observation::simulate(&truth, eps, 7).expect("observation");
    Fixture { grid, truth, obs }
}
