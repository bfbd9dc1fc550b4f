//! Removal of the three kinds of noise terms by change of variables.
//!
//! For `∂_t u + L(u) = Σ (σ_i·Du) ż¹_i + Σ ν_j u ż²_j + Σ g_k ż³_k` with
//! `L = -Tr[A D²u] + b·Du + c(t,x,u)`:
//!
//! 1. inner: `u¹(t,x) = u(t, ψ_t(x))` where `ψ` is the flow of `-σ`; the operator becomes
//!    `A^ψ = M A(ψ) Mᵀ`, `b^ψ_k = (M b(ψ))_k - Σ_ij A_ij(ψ) D²G^k_ij`, `c^ψ = c(t,ψ,r)`,
//!    with `M = (Dψ)^{-1}` and `G = ψ^{-1}`;
//! 2. outer: `u¹ = E v` with `E = exp(I)`, `dI = ν(ψ) dz²`; then `b' = b - 2 A DI` and
//!    `c'(r) = -r Tr[A (DI DIᵀ + D²I)] + r b·DI + c(rE)/E`;
//! 3. additive: `ũ = v - θ` with `dθ = E^{-1} g(ψ) dz³`; then
//!    `c̃(r) = -Tr[A D²θ] + b·Dθ + c(r + θ)`.
//!
//! The transformed unknown solves `∂_t ũ + L̃(ũ) = 0` and
//! `u(t,y) = E(t,x)·(ũ(t,x) + θ(t,x))` at `x = ψ_t^{-1}(y)`.

mod generic;
mod untransform;

use std::sync::Arc;

use crate::coeffs::{NodeCoefficients, NoiseSpec, Operator, OperatorCoefficients};
use crate::error::{Error, Result};
use crate::expr::MAX_VARS;
use crate::field::ReactionField;
use crate::flows::{solve_joint_rde, BundleSlice, FlowBundle, FlowOptions, FlowStepper};
use crate::grid::Grid;
use crate::pdesolve::{solve_parabolic, GridFunction, SolveReport, SolverConfig};
use crate::roughpath::Level2RoughPath;

pub use generic::{
    outer_transform_generic, probe_degenerate_ellipticity, Hamiltonian, InverseMap, Jet, MonotoneMap, OuterTransformed,
    SymbolicMap,
};
pub use untransform::{forward_transform, untransform_solution};

const MAXN: usize = MAX_VARS - 2;

/// Which of the three transformations to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    pub inner: bool,
    pub outer: bool,
    pub additive: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        inner: true,
        outer: true,
        additive: true,
    };
}

/// Inner transformation at the nodes: `op` evaluated along `ψ_t` and conjugated by
/// `(Dψ_t)^{-1}`. Resets the reaction to the base reaction at `ψ_t(x)`.
pub fn inner_transform(op: &OperatorCoefficients, slice: &BundleSlice, out: &mut NodeCoefficients) {
    let n = op.dim();
    let t = slice.t;
    out.begin(t, op.reaction().clone());
    let mut a = [0.0; MAXN * MAXN];
    let mut b = [0.0; MAXN];
    for i in 0..out.len {
        let y = slice.psi_at(i);
        op.diffusion(t, y, &mut a[..n * n]);
        op.drift(t, y, &mut b[..n]);
        let m = slice.inv_jac_at(i);
        let g2 = slice.inv_hess_at(i);
        let ao = &mut out.a[i * n * n..(i + 1) * n * n];
        for p in 0..n {
            for q in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += m[p * n + k] * a[k * n + l] * m[q * n + l];
                    }
                }
                ao[p * n + q] = s;
            }
        }
        let bo = &mut out.b[i * n..(i + 1) * n];
        for k in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += m[k * n + j] * b[j];
            }
            for p in 0..n {
                for q in 0..n {
                    s -= a[p * n + q] * g2[(k * n + p) * n + q];
                }
            }
            bo[k] = s;
        }
        out.base_point[i * n..(i + 1) * n].copy_from_slice(y);
    }
}

/// Outer transformation by the scale `E = exp(I)` of the slice.
pub fn outer_transform(out: &mut NodeCoefficients, slice: &BundleSlice) -> Result<()> {
    let n = out.dim;
    for i in 0..out.len {
        let e = slice.scale(i);
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::NonPositiveScale { node: i, value: e });
        }
        let di = slice.d_log_scale_at(i);
        let d2i = slice.d2_log_scale_at(i);
        let a = &out.a[i * n * n..(i + 1) * n * n];
        let b = &mut out.b[i * n..(i + 1) * n];
        let mut kappa = 0.0;
        for p in 0..n {
            kappa += b[p] * di[p];
            for q in 0..n {
                kappa -= a[p * n + q] * (di[p] * di[q] + d2i[p * n + q]);
            }
        }
        for p in 0..n {
            let adi: f64 = (0..n).map(|q| a[p * n + q] * di[q]).sum();
            b[p] -= 2.0 * adi;
        }
        out.scale[i] *= e;
        out.shift[i] /= e;
        out.alpha[i] /= e;
        out.kappa[i] += kappa;
    }
    Ok(())
}

/// Additive transformation by the shift `θ` of the slice.
pub fn additive_transform(out: &mut NodeCoefficients, slice: &BundleSlice) {
    let n = out.dim;
    for i in 0..out.len {
        let th = slice.theta[i];
        let dth = slice.dtheta_at(i);
        let d2th = slice.d2theta_at(i);
        let a = &out.a[i * n * n..(i + 1) * n * n];
        let b = &out.b[i * n..(i + 1) * n];
        let mut s = out.kappa[i] * th;
        for p in 0..n {
            s += b[p] * dth[p];
            for q in 0..n {
                s -= a[p * n + q] * d2th[p * n + q];
            }
        }
        out.alpha[i] += s;
        out.shift[i] += th;
    }
}

/// All selected stages for one slice.
pub fn transform_at(
    op: &OperatorCoefficients,
    slice: &BundleSlice,
    stages: Stages,
    out: &mut NodeCoefficients,
    grid: &Grid,
) -> Result<()> {
    if stages.inner {
        inner_transform(op, slice, out);
    } else {
        out.fill_from(op, slice.t, grid);
    }
    if stages.outer {
        outer_transform(out, slice)?;
    }
    if stages.additive {
        additive_transform(out, slice);
    }
    Ok(())
}

/// Flow data for the transformation pipeline: the flow of `-σ` (see the module docs),
/// with scale, shift and inverse at `times`.
pub fn pipeline_bundle(
    noise: &NoiseSpec,
    driver: &Level2RoughPath,
    grid: &Grid,
    times: &[f64],
    opts: &FlowOptions,
) -> Result<FlowBundle> {
    solve_joint_rde(&noise.with_negated_sigma()?, driver, grid, times, opts, true)
}

enum Source<'a> {
    Streaming(Box<FlowStepper<'a>>),
    Bundle(&'a FlowBundle),
}

/// `L̃` as an [`Operator`]: coefficients at time `t` are the transformed coefficients of
/// the base operator along the flow at `t`.
pub struct TransformedOperator<'a> {
    base: OperatorCoefficients,
    source: Source<'a>,
    stages: Stages,
    capture: Vec<f64>,
    captured: Vec<BundleSlice>,
    observed_lower_lipschitz: f64,
}

/// `L̃` for a precomputed bundle (from [`pipeline_bundle`]). Coefficients at `t` use the
/// latest bundle slice at or before `t`, so the solver time grid should be the bundle
/// times.
pub fn full_transform<'a>(
    op: &OperatorCoefficients,
    noise: &NoiseSpec,
    bundle: &'a FlowBundle,
) -> Result<TransformedOperator<'a>> {
    if op.dim() != noise.dim() || bundle.grid.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: bundle.grid.dim(),
            context: "bundle grid dimension",
        });
    }
    Ok(TransformedOperator {
        base: op.clone(),
        source: Source::Bundle(bundle),
        stages: Stages::ALL,
        capture: Vec::new(),
        captured: Vec::new(),
        observed_lower_lipschitz: f64::INFINITY,
    })
}

/// `L̃` with the flow integrated alongside the PDE solve; the driver nodes are break
/// points of the solver time grid.
pub fn full_transform_streaming<'a>(
    op: &OperatorCoefficients,
    noise: &NoiseSpec,
    driver: &'a Level2RoughPath,
    grid: &Grid,
    opts: FlowOptions,
) -> Result<TransformedOperator<'a>> {
    if op.dim() != noise.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: noise.dim(),
            context: "noise space dimension",
        });
    }
    let stepper = FlowStepper::new(&noise.with_negated_sigma()?, driver, grid, opts)?;
    Ok(TransformedOperator {
        base: op.clone(),
        source: Source::Streaming(Box::new(stepper)),
        stages: Stages::ALL,
        capture: Vec::new(),
        captured: Vec::new(),
        observed_lower_lipschitz: f64::INFINITY,
    })
}

impl<'a> TransformedOperator<'a> {
    pub fn with_stages(mut self, stages: Stages) -> Self {
        self.stages = stages;
        self
    }

    /// Keep the flow slices (with inverse) met at these times; see [`Self::captured_bundle`].
    pub fn capture_at(mut self, times: &[f64]) -> Self {
        self.capture = times.to_vec();
        self
    }

    pub fn captured_bundle(&self) -> Option<FlowBundle> {
        match &self.source {
            Source::Streaming(s) => Some(FlowBundle {
                grid: s.grid().clone(),
                slices: self.captured.clone(),
            }),
            Source::Bundle(b) => Some((*b).clone()),
        }
    }

    /// Advances the flow to the capture times not met by coefficient requests (typically
    /// the final time) and orders the captured slices.
    pub fn complete_capture(&mut self) -> Result<()> {
        if let Source::Streaming(s) = &mut self.source {
            let mut pending: Vec<f64> = self
                .capture
                .iter()
                .copied()
                .filter(|&c| !self.captured.iter().any(|k| (k.t - c).abs() <= 1e-12 * c.abs().max(1.0)))
                .collect();
            pending.sort_by(f64::total_cmp);
            for t in pending {
                if t < s.t() {
                    return Err(Error::invalid(format!("capture time {t} already passed")));
                }
                s.advance_to(t)?;
                let mut slice = s.slice()?;
                slice.psi_inv = Some(s.inverse_on_grid()?);
                self.captured.push(slice);
            }
            self.captured.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        Ok(())
    }

    fn slice_for(&mut self, t: f64, grid: &Grid) -> Result<BundleSlice> {
        match &mut self.source {
            Source::Streaming(s) => {
                if s.grid() != grid {
                    return Err(Error::GridMismatch("solver grid differs from flow grid".into()));
                }
                s.advance_to(t)?;
                let mut slice = s.slice()?;
                let tol = 1e-12 * t.abs().max(1.0);
                let wanted = self.capture.iter().any(|&c| (c - t).abs() <= tol);
                let have = self.captured.iter().any(|c| (c.t - t).abs() <= tol);
                if wanted && !have {
                    slice.psi_inv = Some(s.inverse_on_grid()?);
                    self.captured.push(slice.clone());
                }
                Ok(slice)
            }
            Source::Bundle(b) => {
                if &b.grid != grid {
                    return Err(Error::GridMismatch("solver grid differs from bundle grid".into()));
                }
                let tol = 1e-12 * t.abs().max(1.0);
                b.slices
                    .iter()
                    .rev()
                    .find(|s| s.t <= t + tol)
                    .cloned()
                    .ok_or(Error::TimeOutOfRange {
                        t,
                        horizon: b.last().t,
                    })
            }
        }
    }
}

impl Operator for TransformedOperator<'_> {
    fn space_dim(&self) -> usize {
        self.base.dim()
    }

    fn coefficients(&mut self, t: f64, grid: &Grid, out: &mut NodeCoefficients) -> Result<()> {
        let slice = self.slice_for(t, grid)?;
        let base = self.base.clone();
        transform_at(&base, &slice, self.stages, out, grid)?;
        out.t = t;
        let c = out.sampled_lower_lipschitz(&[-2.0, -1.0, 0.0, 1.0, 2.0]);
        self.observed_lower_lipschitz = self.observed_lower_lipschitz.min(c);
        Ok(())
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.source {
            Source::Bundle(b) => b.times(),
            Source::Streaming(s) => s.driver().times().to_vec(),
        }
    }

    fn base_reaction(&self) -> Arc<ReactionField> {
        self.base.reaction().clone()
    }

    /// Re-estimated from the coefficients produced so far; the base constant before
    /// the first evaluation.
    fn lower_lipschitz(&self) -> f64 {
        if self.observed_lower_lipschitz.is_finite() {
            self.observed_lower_lipschitz
        } else {
            self.base.lower_lipschitz()
        }
    }
}

/// Output of [`solve_transformed`].
#[derive(Clone, Debug)]
pub struct TransformedSolution {
    /// Solution of the driven equation.
    pub u: GridFunction,
    /// Solution of the transformed equation.
    pub u_tilde: GridFunction,
    pub bundle: FlowBundle,
    pub report: SolveReport,
}

/// Transform, solve the classical equation and transform back: flow, scale and shift are
/// integrated along with the solve, slices with inverse flow are kept at the outputs.
pub fn solve_transformed(
    op: &OperatorCoefficients,
    noise: &NoiseSpec,
    driver: &Level2RoughPath,
    u0: &[f64],
    cfg: &SolverConfig,
    flow: FlowOptions,
) -> Result<TransformedSolution> {
    let mut outputs = vec![0.0];
    outputs.extend(cfg.output_times.iter().copied().filter(|&t| t > 0.0));
    let mut lt = full_transform_streaming(op, noise, driver, &cfg.grid, flow)?.capture_at(&outputs);
    let sol = solve_parabolic(&mut lt, u0, cfg)?;
    lt.complete_capture()?;
    let mut bundle = lt.captured_bundle().expect("streaming source");
    if bundle.slices.first().is_none_or(|s| s.t != 0.0) {
        bundle.slices.insert(0, BundleSlice::identity(0.0, &cfg.grid));
    }
    let u = untransform_solution(&sol.u, &bundle)?;
    Ok(TransformedSolution {
        u,
        u_tilde: sol.u,
        bundle,
        report: sol.report,
    })
}
