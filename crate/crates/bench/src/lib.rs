//! Shared fixtures for the benchmarks.

use rpde::coeffs::{NoiseSpec, OperatorCoefficients};
use rpde::grid::Grid;
use rpde::roughpath::{sample_brownian_path, SampledPath};

/// Ornstein-Uhlenbeck operator with one gradient, one multiplicative and one additive noise.
pub fn smoke_pde() -> (OperatorCoefficients, NoiseSpec) {
    let op = OperatorCoefficients::parse(&["0.125"], &["-x"], "0", 0.0).expect("valid operator");
    let noise = NoiseSpec::parse(1, &[vec!["0.2"]], &["sin(x)"], &["cos(x)"]).expect("valid noise");
    (op, noise)
}

pub fn brownian(seed: u64, dim: usize, level: u32) -> SampledPath {
    sample_brownian_path(seed, dim, (-f64::from(level)).exp2(), 1.0).expect("dyadic mesh")
}

pub fn grid(points: usize) -> Grid {
    Grid::uniform(-6.0, 6.0, points, 1).expect("valid grid")
}

pub fn bump(grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|i| (-2.0 * grid.point_vec(i)[0].powi(2)).exp()).collect()
}
