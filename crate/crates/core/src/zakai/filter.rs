//! The robust filter: Zakai equation driven by a lifted observation, solved through the
//! transformation pipeline.

use std::sync::Arc;

use crate::coeffs::{NodeCoefficients, Operator};
use crate::error::{Error, Result};
use crate::field::ReactionField;
use crate::flows::FlowOptions;
use crate::grid::Grid;
use crate::pdesolve::{solve_parabolic, GridFunction, SolveReport, SolverConfig};
use crate::roughpath::{Level2RoughPath, SampledPath};
use crate::transform::solve_transformed;

use super::model::{build_zakai_operators, FilteringModel, ZakaiOperators};

/// Unnormalized density, its normalization and the solver diagnostics.
#[derive(Clone, Debug)]
pub struct FilterOutput {
    pub unnormalized: GridFunction,
    pub normalized: GridFunction,
    /// Trapezoidal mass of each slice over the box.
    pub mass: Vec<f64>,
    pub report: SolveReport,
}

impl FilterOutput {
    fn new(u: GridFunction, report: SolveReport) -> Result<Self> {
        let mut normalized = u.clone();
        let mut mass = Vec::with_capacity(u.len());
        for k in 0..u.len() {
            let m = u.mass(k);
            if !(m > 1e-300) || !m.is_finite() {
                return Err(Error::MassUnderflow { t: u.times[k], mass: m });
            }
            for v in &mut normalized.values[k] {
                *v /= m;
            }
            mass.push(m);
        }
        Ok(Self {
            unnormalized: u,
            normalized,
            mass,
            report,
        })
    }

    /// Mean and standard deviation of the normalized density of slice `k`.
    pub fn moments(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        density_moments(&self.normalized.grid, &self.normalized.values[k])
    }
}

/// Mean and per-coordinate standard deviation of a density sampled on `grid`.
pub fn density_moments(grid: &Grid, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.dim();
    let m = grid.integrate(p);
    let mut mean = vec![0.0; n];
    let mut second = vec![0.0; n];
    let mut x = vec![0.0; n];
    for a in 0..n {
        let w: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                p[i] * x[a]
            })
            .collect();
        mean[a] = grid.integrate(&w) / m;
        let w: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                p[i] * x[a] * x[a]
            })
            .collect();
        second[a] = grid.integrate(&w) / m;
    }
    let std = mean
        .iter()
        .zip(&second)
        .map(|(m, s)| (s - m * m).max(0.0).sqrt())
        .collect();
    (mean, std)
}

/// The prior density sampled on `grid`.
pub fn prior_on_grid(model: &FilteringModel, grid: &Grid) -> Vec<f64> {
    let mut x = vec![0.0; grid.dim()];
    (0..grid.len())
        .map(|i| {
            grid.point(i, &mut x);
            model.prior_density(&x)
        })
        .collect()
}

/// Robust filter for `model` given the lifted observation.
pub fn robust_filter(
    model: &FilteringModel,
    obs: &Level2RoughPath,
    u0: &[f64],
    cfg: &SolverConfig,
    flow: FlowOptions,
) -> Result<FilterOutput> {
    robust_filter_with(&build_zakai_operators(model)?, obs, u0, cfg, flow)
}

/// [`robust_filter`] with prebuilt coefficients.
pub fn robust_filter_with(
    ops: &ZakaiOperators,
    obs: &Level2RoughPath,
    u0: &[f64],
    cfg: &SolverConfig,
    flow: FlowOptions,
) -> Result<FilterOutput> {
    if obs.dim() != ops.obs_dim {
        return Err(Error::DimensionMismatch {
            expected: ops.obs_dim,
            got: obs.dim(),
            context: "observation channels",
        });
    }
    if ops.noise.driver_dim() == 0 {
        let sol = solve_parabolic(&mut ops.operator.clone(), u0, cfg)?;
        return FilterOutput::new(sol.u, sol.report);
    }
    let driver = ops.driver(obs)?;
    let sol = solve_transformed(&ops.operator, &ops.noise, &driver, u0, cfg, flow)?;
    FilterOutput::new(sol.u, sol.report)
}

/// Uncorrelated models: `u = exp(Σ ν_j Z^j_t) v` with `v` solving a classical PDE whose
/// coefficients are written down directly from `Z_t`.
struct ClassicalRobust<'a> {
    ops: &'a ZakaiOperators,
    obs: &'a SampledPath,
    z: Vec<f64>,
}

impl ClassicalRobust<'_> {
    /// `I = Σ ν_j(x) z_j` with gradient and Hessian at `x`.
    fn exponent(&self, t: f64, x: &[f64], di: &mut [f64], d2i: &mut [f64]) -> f64 {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        di.fill(0.0);
        d2i.fill(0.0);
        let mut i = 0.0;
        for (nu, z) in self.ops.noise.nu().iter().zip(&self.z) {
            i += nu.eval(t, x) * z;
            nu.gradient(t, x, &mut g);
            nu.hessian(t, x, &mut h);
            for a in 0..n {
                di[a] += g[a] * z;
            }
            for a in 0..n * n {
                d2i[a] += h[a] * z;
            }
        }
        i
    }
}

impl Operator for ClassicalRobust<'_> {
    fn space_dim(&self) -> usize {
        self.ops.operator.dim()
    }

    fn coefficients(&mut self, t: f64, grid: &Grid, out: &mut NodeCoefficients) -> Result<()> {
        out.fill_from(&self.ops.operator, t, grid);
        out.fold_affine();
        self.obs.eval(t, &mut self.z);
        let n = grid.dim();
        let mut x = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut d2i = vec![0.0; n * n];
        for node in 0..grid.len() {
            grid.point(node, &mut x);
            let e = self.exponent(t, &x, &mut di, &mut d2i).exp();
            let a = &out.a[node * n * n..(node + 1) * n * n];
            let b = &mut out.b[node * n..(node + 1) * n];
            let mut k = 0.0;
            for p in 0..n {
                k += b[p] * di[p];
                for q in 0..n {
                    k -= a[p * n + q] * (di[p] * di[q] + d2i[p * n + q]);
                }
            }
            for p in 0..n {
                let s: f64 = (0..n).map(|q| a[p * n + q] * di[q]).sum();
                b[p] -= 2.0 * s;
            }
            out.kappa[node] += k;
            out.alpha[node] /= e;
        }
        Ok(())
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.obs.times().to_vec()
    }

    fn base_reaction(&self) -> Arc<ReactionField> {
        self.ops.operator.reaction().clone()
    }

    fn lower_lipschitz(&self) -> f64 {
        self.ops.operator.lower_lipschitz()
    }
}

/// Filter of an uncorrelated model through the classical robust form, for comparison
/// with [`robust_filter`].
pub fn classical_robust_filter(
    ops: &ZakaiOperators,
    obs: &SampledPath,
    u0: &[f64],
    cfg: &SolverConfig,
) -> Result<FilterOutput> {
    if ops.noise.d1() > 0 || ops.noise.d3() > 0 {
        return Err(Error::invalid("the classical robust form needs an uncorrelated model"));
    }
    if ops.noise.nu().iter().any(|f| f.depends_on_time()) || !ops.operator.reaction().is_affine() {
        return Err(Error::invalid(
            "the classical robust form needs time-independent ν and an affine reaction",
        ));
    }
    let driver = ops.driver_path(obs)?;
    let mut op = ClassicalRobust {
        ops,
        obs: &driver,
        z: vec![0.0; driver.dim()],
    };
    let sol = solve_parabolic(&mut op, u0, cfg)?;
    let mut u = sol.u;
    let grid = cfg.grid.clone();
    let n = grid.dim();
    let mut x = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut d2i = vec![0.0; n * n];
    for (k, &t) in u.times.clone().iter().enumerate() {
        driver.eval(t, &mut op.z);
        for node in 0..grid.len() {
            grid.point(node, &mut x);
            u.values[k][node] *= op.exponent(t, &x, &mut di, &mut d2i).exp();
        }
    }
    FilterOutput::new(u, sol.report)
}
