//! Explicit monotone solver for `∂_t u + L(t,x,u,Du,D²u) = 0` on a box, and the direct
//! solver for smoothly driven equations.

mod checks;
mod driven;
mod gridfn;
mod scheme;

use serde::{Deserialize, Serialize};

use crate::coeffs::{NodeCoefficients, Operator};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::roughpath::merge_times;

pub use checks::{check_order, contraction_check, ContractionReport};
pub use driven::{solve_driven, DrivenOperator};
pub use gridfn::GridFunction;
pub use scheme::{explicit_step, stability_rate, Stencil, StepStats};

/// Edge treatment of the truncated box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// Edge nodes keep their previous values.
    #[default]
    FrozenEdge,
}

/// Time stepping and output control.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub grid: Grid,
    /// Nominal time step.
    pub dt: f64,
    pub horizon: f64,
    /// Times at which slices are kept (the initial time is always kept).
    pub output_times: Vec<f64>,
    /// Safety factor in `(0, 1]` applied to the stable step `1 / (Σ w + |∂_r c|)`.
    pub cfl_safety: f64,
    pub boundary: BoundaryRule,
    /// Split a step into equal substeps when it violates the stability bound instead of
    /// failing.
    pub adaptive: bool,
}

impl SolverConfig {
    pub fn new(grid: Grid, dt: f64, horizon: f64) -> Self {
        Self {
            grid,
            dt,
            horizon,
            output_times: vec![horizon],
            cfl_safety: 0.9,
            boundary: BoundaryRule::FrozenEdge,
            adaptive: false,
        }
    }

    pub fn with_outputs(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    pub fn with_safety(mut self, s: f64) -> Self {
        self.cfl_safety = s;
        self
    }

    pub fn adaptive(mut self, on: bool) -> Self {
        self.adaptive = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::invalid("time step and horizon must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::invalid("CFL safety factor must lie in (0, 1]"));
        }
        let tol = 1e-12 * self.horizon;
        if self.output_times.iter().any(|&t| t < -tol || t > self.horizon + tol) {
            return Err(Error::invalid("output times must lie in [0, horizon]"));
        }
        Ok(())
    }

    /// Uniform steps merged with the outputs and `extra` break points inside `[0, T]`.
    pub fn time_grid(&self, extra: &[f64]) -> Vec<f64> {
        let steps = (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize;
        let mut base: Vec<f64> = (0..=steps).map(|k| self.horizon * k as f64 / steps as f64).collect();
        let inside: Vec<f64> = self
            .output_times
            .iter()
            .chain(extra)
            .copied()
            .filter(|&t| t > 0.0 && t < self.horizon)
            .collect();
        if !inside.is_empty() {
            base = merge_times(&base, &inside);
        }
        base
    }
}

/// Summary of a solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Largest `dt · rate` used (at most the safety factor).
    pub max_cfl: f64,
    /// Largest number of interior nodes in one step where the diffusion matrix was not
    /// diagonally dominant.
    pub non_dominant_nodes: usize,
    pub boundary_width: Vec<f64>,
}

/// Solution and diagnostics.
#[derive(Clone, Debug)]
pub struct Solution {
    pub u: GridFunction,
    pub report: SolveReport,
}

/// Tracks how far boundary values may have propagated into the box: an advective front
/// moving with the inward drift found near the front, plus a diffusive band
/// `6 sqrt(2 ∫ max a_kk dt)` and two cells.
struct BoundaryCone {
    advective: f64,
    diffusive_var: f64,
    cells: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoundaryCone {
    fn new(grid: &Grid) -> Self {
        let n = grid.dim();
        let cells = (0..n).map(|k| grid.spacing(k)).fold(0.0, f64::max);
        Self {
            advective: 0.0,
            diffusive_var: 0.0,
            cells: 2.0 * cells,
            lo: (0..n).map(|k| grid.axis(k).lo).collect(),
            hi: (0..n).map(|k| grid.axis(k).hi).collect(),
        }
    }

    fn width(&self) -> f64 {
        if self.advective == 0.0 && self.diffusive_var == 0.0 {
            return 0.0;
        }
        self.advective + 6.0 * (2.0 * self.diffusive_var).sqrt() + self.cells
    }

    fn advance(&mut self, grid: &Grid, c: &NodeCoefficients, dt: f64) {
        let n = grid.dim();
        // The front moves with the fastest inward drift between its current position and
        // the outer edge of the diffusive band ahead of it.
        let near = (self.advective - self.cells).max(0.0);
        let band = self.width() + self.cells;
        let mut speed = 0.0f64;
        let mut amax = 0.0f64;
        let mut x = vec![0.0; n];
        for i in 0..grid.len() {
            let a = c.a_at(i);
            for k in 0..n {
                amax = amax.max(a[k * n + k]);
            }
            grid.point(i, &mut x);
            let b = c.b_at(i);
            for k in 0..n {
                let (dl, dh) = (x[k] - self.lo[k], self.hi[k] - x[k]);
                if dl >= near && dl <= band {
                    speed = speed.max(b[k]);
                }
                if dh >= near && dh <= band {
                    speed = speed.max(-b[k]);
                }
            }
        }
        self.advective += dt * speed;
        self.diffusive_var += dt * amax;
    }
}

fn check_finite(u: &[f64], t: f64) -> Result<()> {
    match u.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { t, node }),
        None => Ok(()),
    }
}

/// Explicit monotone time stepping of `∂_t u + L(u) = 0` from `u0` at `t = 0`.
pub fn solve_parabolic<O: Operator + ?Sized>(op: &mut O, u0: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let grid = &cfg.grid;
    if u0.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "initial data has {} values, grid has {} nodes",
            u0.len(),
            grid.len()
        )));
    }
    if op.space_dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: op.space_dim(),
            context: "operator space dimension",
        });
    }
    check_finite(u0, 0.0)?;
    let times = cfg.time_grid(&op.breakpoints());
    let stencil = Stencil::new(grid);
    let mut coeffs = NodeCoefficients::new(grid.dim(), grid.len(), op.base_reaction());
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u.len()];
    let mut cone = BoundaryCone::new(grid);
    let tol = 1e-12 * cfg.horizon.max(1.0);
    let is_output = |t: f64| cfg.output_times.iter().any(|&s| (s - t).abs() <= tol);

    let mut out_times = vec![0.0];
    let mut out_values = vec![u.clone()];
    let mut out_width = vec![0.0];
    let mut report = SolveReport {
        min_dt: f64::INFINITY,
        ..SolveReport::default()
    };

    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut t = t0;
        while t < t1 - tol {
            op.coefficients(t, grid, &mut coeffs)?;
            coeffs.fold_affine();
            let stats = stability_rate(&stencil, &coeffs, &u);
            report.non_dominant_nodes = report.non_dominant_nodes.max(stats.non_dominant);
            let remaining = t1 - t;
            let limit = if stats.max_rate > 0.0 {
                cfg.cfl_safety / stats.max_rate
            } else {
                f64::INFINITY
            };
            let dt = if remaining <= limit * (1.0 + 1e-12) {
                remaining
            } else if cfg.adaptive {
                let m = (remaining / limit).ceil();
                remaining / m
            } else {
                return Err(Error::Cfl {
                    t,
                    dt: remaining,
                    max_dt: limit,
                });
            };
            explicit_step(&stencil, &coeffs, &u, dt, &mut next);
            std::mem::swap(&mut u, &mut next);
            cone.advance(grid, &coeffs, dt);
            t = if (t1 - (t + dt)).abs() <= tol { t1 } else { t + dt };
            check_finite(&u, t)?;
            report.steps += 1;
            report.min_dt = report.min_dt.min(dt);
            report.max_dt = report.max_dt.max(dt);
            report.max_cfl = report.max_cfl.max(dt * stats.max_rate);
        }
        if is_output(t1) {
            out_times.push(t1);
            out_values.push(u.clone());
            out_width.push(cone.width());
        }
    }
    report.boundary_width = out_width.clone();
    let u = GridFunction::new(grid.clone(), out_times, out_values, out_width)?;
    Ok(Solution { u, report })
}
