//! Brownian drivers with their piecewise-linear (Stratonovich) lift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::lift::Level2RoughPath;
use super::path::SampledPath;

/// Number of steps of size `mesh` that make up `horizon`.
pub fn steps_for(mesh: f64, horizon: f64) -> Result<usize> {
    if !(mesh > 0.0 && mesh.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("need mesh > 0 and horizon > 0 (got {mesh}, {horizon})")));
    }
    let steps = (horizon / mesh).round();
    if steps < 1.0 || (steps * mesh - horizon).abs() > 1e-9 * horizon {
        return Err(Error::invalid(format!("horizon {horizon} is not a multiple of mesh {mesh}")));
    }
    Ok(steps as usize)
}

/// `d`-dimensional Brownian motion sampled on a uniform mesh, `B_0 = 0`.
pub fn sample_brownian_path(seed: u64, d: usize, mesh: f64, horizon: f64) -> Result<SampledPath> {
    if d == 0 {
        return Err(Error::invalid("Brownian dimension must be positive"));
    }
    let steps = steps_for(mesh, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = mesh.sqrt();
    let mut values = vec![0.0; (steps + 1) * d];
    for k in 0..steps {
        for i in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            values[(k + 1) * d + i] = values[k * d + i] + sd * g;
        }
    }
    SampledPath::new(SampledPath::uniform_times(horizon, steps), values, d)
}

/// Level-2 lift of [`sample_brownian_path`].
pub fn sample_brownian_rough_path(seed: u64, d: usize, mesh: f64, horizon: f64) -> Result<Level2RoughPath> {
    Ok(sample_brownian_path(seed, d, mesh, horizon)?.lift())
}
