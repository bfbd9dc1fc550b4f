//! Discrete comparison and contraction checks on solver output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GridFunction;

/// `u <= v + 1e-12` at every node of every slice.
pub fn check_order(u: &GridFunction, v: &GridFunction) -> Result<bool> {
    if u.grid != v.grid || u.times.len() != v.times.len() {
        return Err(Error::GridMismatch("compared functions live on different grids".into()));
    }
    Ok(u
        .values
        .iter()
        .zip(&v.values)
        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *x <= *y + 1e-12)))
}

/// Per-slice ratios `sup_core |u - û|(t) / sup |u0 - û0|` against `e^{κ t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
    pub bounds: Vec<f64>,
    pub initial_gap: f64,
    pub pass: bool,
}

/// Relative slack allowed above `e^{κ t}`.
pub const CONTRACTION_SLACK: f64 = 5e-2;

/// Compares two solutions of the same equation. `growth` is the exponent `κ` in
/// `|u - û|(t) <= e^{κ t} |u0 - û0|`; for `∂_t u + L(u) = 0` with
/// `c(r) - c(s) >= C (r - s)` it is `κ = -C`.
pub fn contraction_check(u: &GridFunction, u_hat: &GridFunction, growth: f64, horizon: f64) -> Result<ContractionReport> {
    if u.grid != u_hat.grid {
        return Err(Error::GridMismatch("contraction check needs a common grid".into()));
    }
    let gaps = u.sup_diff_core(u_hat)?;
    let initial_gap = u.values[0]
        .iter()
        .zip(&u_hat.values[0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut report = ContractionReport {
        times: Vec::new(),
        ratios: Vec::new(),
        bounds: Vec::new(),
        initial_gap,
        pass: true,
    };
    for (k, &t) in u.times.iter().enumerate() {
        if t > horizon * (1.0 + 1e-12) {
            break;
        }
        let ratio = if initial_gap == 0.0 { 0.0 } else { gaps[k] / initial_gap };
        let bound = (growth * t).exp();
        report.pass &= ratio <= bound * (1.0 + CONTRACTION_SLACK);
        report.times.push(t);
        report.ratios.push(ratio);
        report.bounds.push(bound);
    }
    Ok(report)
}
