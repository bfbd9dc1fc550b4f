//! Direct method of lines for `∂_t u + L(u) = Σ Λ_k(u) ż^k` with a piecewise-linear
//! driver: on each driver segment the noise terms fold into the drift and reaction.

use std::sync::Arc;

use crate::coeffs::{NodeCoefficients, NoiseSpec, Operator, OperatorCoefficients};
use crate::error::{Error, Result};
use crate::field::ReactionField;
use crate::grid::Grid;
use crate::roughpath::SampledPath;

use super::{solve_parabolic, Solution, SolverConfig};

/// `L - Σ Λ_k ż^k` with `ż` the slope of the driver segment starting at `t`:
/// `b - Σ σ_i ż¹_i`, reaction `c - r Σ ν_j ż²_j - Σ g_k ż³_k`.
pub struct DrivenOperator<'a> {
    base: &'a OperatorCoefficients,
    noise: &'a NoiseSpec,
    driver: &'a SampledPath,
}

impl<'a> DrivenOperator<'a> {
    pub fn new(base: &'a OperatorCoefficients, noise: &'a NoiseSpec, driver: &'a SampledPath) -> Result<Self> {
        if driver.dim() != noise.driver_dim() {
            return Err(Error::DimensionMismatch {
                expected: noise.driver_dim(),
                got: driver.dim(),
                context: "driver channels (d1 + d2 + d3)",
            });
        }
        if base.dim() != noise.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: noise.dim(),
                context: "noise space dimension",
            });
        }
        Ok(Self { base, noise, driver })
    }
}

impl Operator for DrivenOperator<'_> {
    fn space_dim(&self) -> usize {
        self.base.dim()
    }

    fn coefficients(&mut self, t: f64, grid: &Grid, out: &mut NodeCoefficients) -> Result<()> {
        out.fill_from(self.base, t, grid);
        if self.noise.is_zero() {
            return Ok(());
        }
        let n = grid.dim();
        let (d1, d2) = (self.noise.d1(), self.noise.d2());
        let mut zdot = vec![0.0; self.driver.dim()];
        // nodes of the time grid may sit a rounding error below a driver node
        let probe = t + 1e-11 * self.driver.horizon().max(1.0);
        self.driver.slope(self.driver.segment_index(probe), &mut zdot);
        let mut x = vec![0.0; n];
        let mut s = vec![0.0; n];
        for i in 0..grid.len() {
            grid.point(i, &mut x);
            let b = &mut out.b[i * n..(i + 1) * n];
            for (k, sigma) in self.noise.sigma().iter().enumerate() {
                if zdot[k] == 0.0 {
                    continue;
                }
                sigma.eval(t, &x, &mut s);
                for a in 0..n {
                    b[a] -= s[a] * zdot[k];
                }
            }
            for (j, nu) in self.noise.nu().iter().enumerate() {
                out.kappa[i] -= nu.eval(t, &x) * zdot[d1 + j];
            }
            for (k, g) in self.noise.g().iter().enumerate() {
                out.alpha[i] -= g.eval(t, &x) * zdot[d1 + d2 + k];
            }
        }
        Ok(())
    }

    fn breakpoints(&self) -> Vec<f64> {
        if self.noise.is_zero() {
            Vec::new()
        } else {
            self.driver.times().to_vec()
        }
    }

    fn base_reaction(&self) -> Arc<ReactionField> {
        self.base.reaction().clone()
    }

    fn lower_lipschitz(&self) -> f64 {
        self.base.lower_lipschitz()
    }
}

/// Direct solve of the driven equation; the time grid contains every driver node.
pub fn solve_driven(
    op: &OperatorCoefficients,
    noise: &NoiseSpec,
    driver: &SampledPath,
    u0: &[f64],
    cfg: &SolverConfig,
) -> Result<Solution> {
    if driver.horizon() < cfg.horizon * (1.0 - 1e-12) {
        return Err(Error::TimeOutOfRange {
            t: cfg.horizon,
            horizon: driver.horizon(),
        });
    }
    let mut driven = DrivenOperator::new(op, noise, driver)?;
    solve_parabolic(&mut driven, u0, cfg)
}
