//! Fast-rotating test paths whose area does not vanish as they shrink uniformly.

use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::brownian::steps_for;
use super::path::SampledPath;

/// Coarsest admissible mesh for `oscillator_path(n, ..)`.
pub fn oscillator_max_mesh(n: u32) -> f64 {
    1.0 / (20.0 * f64::from(n) * f64::from(n))
}

/// `z^n(t) = (cos(2π n² t) / n, sin(2π n² t) / n)` on a uniform mesh.
///
/// Each loop encloses area `π / n²` and there are `n²` loops per unit time, so the
/// lifted area grows like `π t` while `|z^n|_∞ = 1/n`.
pub fn oscillator_path(n: u32, horizon: f64, mesh: f64) -> Result<SampledPath> {
    if n == 0 {
        return Err(Error::invalid("oscillator index must be positive"));
    }
    let max = oscillator_max_mesh(n);
    if mesh > max * (1.0 + 1e-12) {
        return Err(Error::MeshTooCoarse { n, mesh, max });
    }
    let steps = steps_for(mesh, horizon)?;
    let nf = f64::from(n);
    let omega = 2.0 * PI * nf * nf;
    SampledPath::from_fn(SampledPath::uniform_times(horizon, steps), 2, |t, out| {
        out[0] = (omega * t).cos() / nf;
        out[1] = (omega * t).sin() / nf;
    })
}
