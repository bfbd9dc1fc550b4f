//! Operator and noise coefficients, and their evaluation on grid nodes.
//!
//! Operators have the form `L(t,x,r,p,X) = -Tr[A X] + b·p + c(t,x,r)` and the noise
//! terms `Λ_k` are `σ_i·Du` (gradient noise), `ν_j u` (multiplicative) and `g_k`
//! (additive). A driven solution satisfies `∂_t u + L(u) = Σ Λ_k(u) ż^k`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{ReactionField, ScalarField, VectorField};
use crate::grid::Grid;

/// Symbolic coefficients `(A, b, c, C)` of a second-order operator.
#[derive(Clone, Debug)]
pub struct OperatorCoefficients {
    dim: usize,
    diffusion: Vec<ScalarField>,
    drift: Vec<ScalarField>,
    reaction: Arc<ReactionField>,
    lower_lipschitz: f64,
}

impl OperatorCoefficients {
    /// `diffusion` holds the `n x n` entries row-major; it must be symmetric.
    pub fn new(
        diffusion: Vec<ScalarField>,
        drift: Vec<ScalarField>,
        reaction: ReactionField,
        lower_lipschitz: f64,
    ) -> Result<Self> {
        let n = drift.len();
        if n == 0 {
            return Err(Error::invalid("operator needs a positive space dimension"));
        }
        if diffusion.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: diffusion.len(),
                context: "diffusion matrix entries",
            });
        }
        if diffusion.iter().chain(&drift).any(|f| f.dim() != n) || reaction.dim() != n {
            return Err(Error::invalid("operator coefficient fields disagree on the space dimension"));
        }
        if !lower_lipschitz.is_finite() {
            return Err(Error::invalid("lower-Lipschitz constant must be finite"));
        }
        Ok(Self {
            dim: n,
            diffusion,
            drift,
            reaction: Arc::new(reaction),
            lower_lipschitz,
        })
    }

    pub fn parse(diffusion: &[&str], drift: &[&str], reaction: &str, lower_lipschitz: f64) -> Result<Self> {
        let n = drift.len();
        Self::new(
            diffusion
                .iter()
                .map(|s| ScalarField::parse(s, n))
                .collect::<Result<_>>()?,
            drift.iter().map(|s| ScalarField::parse(s, n)).collect::<Result<_>>()?,
            ReactionField::parse(reaction, n)?,
            lower_lipschitz,
        )
    }

    pub fn from_exprs(diffusion: Vec<Expr>, drift: Vec<Expr>, reaction: Expr, lower_lipschitz: f64) -> Result<Self> {
        let n = drift.len();
        Self::new(
            diffusion.into_iter().map(|e| ScalarField::new(e, n)).collect(),
            drift.into_iter().map(|e| ScalarField::new(e, n)).collect(),
            ReactionField::new(reaction, n),
            lower_lipschitz,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diffusion_fields(&self) -> &[ScalarField] {
        &self.diffusion
    }

    pub fn drift_fields(&self) -> &[ScalarField] {
        &self.drift
    }

    pub fn reaction(&self) -> &Arc<ReactionField> {
        &self.reaction
    }

    pub fn lower_lipschitz(&self) -> f64 {
        self.lower_lipschitz
    }

    pub fn with_lower_lipschitz(mut self, c: f64) -> Self {
        self.lower_lipschitz = c;
        self
    }

    /// Replaces the reaction term (the lower-Lipschitz constant must be restated).
    pub fn with_reaction(mut self, reaction: ReactionField, lower_lipschitz: f64) -> Self {
        self.reaction = Arc::new(reaction);
        self.lower_lipschitz = lower_lipschitz;
        self
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.diffusion) {
            *o = f.eval(t, x);
        }
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.drift) {
            *o = f.eval(t, x);
        }
    }

    #[inline]
    pub fn reaction_at(&self, t: f64, x: &[f64], r: f64) -> f64 {
        self.reaction.eval(t, x, r)
    }

    /// Checks symmetry and positive semi-definiteness of `A` at the given points and
    /// the lower-Lipschitz bound on pairs `r > s` drawn from `r_values`.
    pub fn check_invariants(&self, points: &[(f64, Vec<f64>)], r_values: &[f64]) -> Result<()> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for (t, x) in points {
            self.diffusion(*t, x, &mut a);
            for i in 0..n {
                for j in 0..i {
                    let scale = 1.0 + a[i * n + j].abs();
                    if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 * scale {
                        return Err(Error::Model(format!("diffusion matrix not symmetric at t={t}, x={x:?}")));
                    }
                }
            }
            let lam = crate::linalg::min_eigenvalue_sym(&a, n);
            if lam < -1e-10 {
                return Err(Error::Model(format!(
                    "diffusion matrix not positive semi-definite at t={t}, x={x:?} (eigenvalue {lam})"
                )));
            }
            for (ri, &r) in r_values.iter().enumerate() {
                for &s in &r_values[..ri] {
                    let (hi, lo) = if r > s { (r, s) } else { (s, r) };
                    if hi == lo {
                        continue;
                    }
                    let slope = (self.reaction_at(*t, x, hi) - self.reaction_at(*t, x, lo)) / (hi - lo);
                    if slope < self.lower_lipschitz - 1e-9 * (1.0 + slope.abs()) {
                        return Err(Error::Model(format!(
                            "reaction violates lower-Lipschitz bound {} at t={t}, x={x:?} (slope {slope})",
                            self.lower_lipschitz
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Noise coefficients: gradient fields `σ_i`, multiplicative `ν_j`, additive `g_k`.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    dim: usize,
    sigma: Vec<VectorField>,
    nu: Vec<ScalarField>,
    g: Vec<ScalarField>,
}

impl NoiseSpec {
    pub fn new(dim: usize, sigma: Vec<VectorField>, nu: Vec<ScalarField>, g: Vec<ScalarField>) -> Result<Self> {
        if sigma.iter().any(|s| s.dim() != dim) || nu.iter().chain(&g).any(|f| f.dim() != dim) {
            return Err(Error::invalid("noise coefficients disagree on the space dimension"));
        }
        Ok(Self { dim, sigma, nu, g })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            sigma: Vec::new(),
            nu: Vec::new(),
            g: Vec::new(),
        }
    }

    pub fn parse(dim: usize, sigma: &[Vec<&str>], nu: &[&str], g: &[&str]) -> Result<Self> {
        let sigma = sigma
            .iter()
            .map(|c| {
                if c.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: c.len(),
                        context: "gradient noise field components",
                    });
                }
                VectorField::parse(c)
            })
            .collect::<Result<_>>()?;
        let nu = nu.iter().map(|s| ScalarField::parse(s, dim)).collect::<Result<_>>()?;
        let g = g.iter().map(|s| ScalarField::parse(s, dim)).collect::<Result<_>>()?;
        Self::new(dim, sigma, nu, g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> &[VectorField] {
        &self.sigma
    }

    pub fn nu(&self) -> &[ScalarField] {
        &self.nu
    }

    pub fn g(&self) -> &[ScalarField] {
        &self.g
    }

    pub fn d1(&self) -> usize {
        self.sigma.len()
    }

    pub fn d2(&self) -> usize {
        self.nu.len()
    }

    pub fn d3(&self) -> usize {
        self.g.len()
    }

    /// `d1 + d2 + d3`.
    pub fn driver_dim(&self) -> usize {
        self.d1() + self.d2() + self.d3()
    }

    /// True when every coefficient is symbolically zero.
    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(VectorField::is_zero)
            && self.nu.iter().all(ScalarField::is_zero)
            && self.g.iter().all(ScalarField::is_zero)
    }

    /// Same noise with every gradient field negated.
    pub fn with_negated_sigma(&self) -> Result<Self> {
        let sigma = self
            .sigma
            .iter()
            .map(|v| {
                VectorField::from_exprs(
                    (0..v.dim())
                        .map(|i| Expr::neg(v.component(i).expr().clone()))
                        .collect(),
                )
            })
            .collect::<Result<_>>()?;
        Self::new(self.dim, sigma, self.nu.clone(), self.g.clone())
    }
}

/// Coefficients of an operator frozen at one time on every node of a grid.
///
/// The reaction at node `i` is
/// `alpha_i + kappa_i r + c(t, y_i, s_i (r + h_i)) / s_i`
/// with `c` the base reaction field, `s` the scale and `h` the shift; this form is closed
/// under the three transformations. After [`NodeCoefficients::fold_affine`] an affine base
/// reaction is absorbed into `alpha` and `kappa`.
#[derive(Clone, Debug)]
pub struct NodeCoefficients {
    pub dim: usize,
    pub len: usize,
    pub t: f64,
    /// `len x n x n`
    pub a: Vec<f64>,
    /// `len x n`
    pub b: Vec<f64>,
    pub alpha: Vec<f64>,
    pub kappa: Vec<f64>,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    /// Point at which the base reaction is evaluated, `len x n`.
    pub base_point: Vec<f64>,
    pub base: Arc<ReactionField>,
    folded: bool,
}

impl NodeCoefficients {
    pub fn new(dim: usize, len: usize, base: Arc<ReactionField>) -> Self {
        Self {
            dim,
            len,
            t: 0.0,
            a: vec![0.0; len * dim * dim],
            b: vec![0.0; len * dim],
            alpha: vec![0.0; len],
            kappa: vec![0.0; len],
            scale: vec![1.0; len],
            shift: vec![0.0; len],
            base_point: vec![0.0; len * dim],
            base,
            folded: false,
        }
    }

    /// Plain evaluation of `op` at the nodes of `grid`.
    pub fn fill_from(&mut self, op: &OperatorCoefficients, t: f64, grid: &Grid) {
        let n = self.dim;
        self.begin(t, op.reaction.clone());
        let mut x = vec![0.0; n];
        for i in 0..self.len {
            grid.point(i, &mut x);
            op.diffusion(t, &x, &mut self.a[i * n * n..(i + 1) * n * n]);
            op.drift(t, &x, &mut self.b[i * n..(i + 1) * n]);
            self.base_point[i * n..(i + 1) * n].copy_from_slice(&x);
        }
    }

    /// Resets the reaction to the plain base reaction at time `t`.
    pub fn begin(&mut self, t: f64, base: Arc<ReactionField>) {
        self.t = t;
        self.base = base;
        self.folded = false;
        self.alpha.fill(0.0);
        self.kappa.fill(0.0);
        self.scale.fill(1.0);
        self.shift.fill(0.0);
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    /// Absorbs an affine base reaction into `alpha` and `kappa`.
    pub fn fold_affine(&mut self) {
        if self.folded || !self.base.is_affine() {
            return;
        }
        let n = self.dim;
        for i in 0..self.len {
            let y = &self.base_point[i * n..(i + 1) * n];
            let c0 = self.base.eval(self.t, y, 0.0);
            let c1 = self.base.d_r(self.t, y, 0.0);
            // (c0 + c1 s (r + h)) / s
            self.alpha[i] += c0 / self.scale[i] + c1 * self.shift[i];
            self.kappa[i] += c1;
        }
        self.folded = true;
    }

    #[inline]
    pub fn reaction(&self, i: usize, r: f64) -> f64 {
        let lin = self.alpha[i] + self.kappa[i] * r;
        if self.folded {
            return lin;
        }
        let n = self.dim;
        let s = self.scale[i];
        lin + self.base.eval(self.t, &self.base_point[i * n..(i + 1) * n], s * (r + self.shift[i])) / s
    }

    #[inline]
    pub fn reaction_dr(&self, i: usize, r: f64) -> f64 {
        if self.folded {
            return self.kappa[i];
        }
        let n = self.dim;
        let s = self.scale[i];
        self.kappa[i] + self.base.d_r(self.t, &self.base_point[i * n..(i + 1) * n], s * (r + self.shift[i]))
    }

    #[inline]
    pub fn a_at(&self, i: usize) -> &[f64] {
        &self.a[i * self.dim * self.dim..(i + 1) * self.dim * self.dim]
    }

    #[inline]
    pub fn b_at(&self, i: usize) -> &[f64] {
        &self.b[i * self.dim..(i + 1) * self.dim]
    }

    /// Smallest slope `(c(r) - c(s)) / (r - s)` over the node set and the sampled `r` values.
    pub fn sampled_lower_lipschitz(&self, r_values: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..self.len {
            if self.folded || self.base.is_affine() {
                worst = worst.min(self.reaction_dr(i, 0.0));
                continue;
            }
            for (k, &r) in r_values.iter().enumerate() {
                for &s in &r_values[..k] {
                    if r != s {
                        worst = worst.min((self.reaction(i, r) - self.reaction(i, s)) / (r - s));
                    }
                }
            }
        }
        worst
    }
}

/// Source of node coefficients at increasing times.
pub trait Operator {
    fn space_dim(&self) -> usize;

    /// Fills `out` with the coefficients at time `t`. Calls come with nondecreasing `t`.
    fn coefficients(&mut self, t: f64, grid: &Grid, out: &mut NodeCoefficients) -> Result<()>;

    /// Times at which coefficients may jump and which the time grid must contain.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn base_reaction(&self) -> Arc<ReactionField>;

    fn lower_lipschitz(&self) -> f64;
}

impl Operator for OperatorCoefficients {
    fn space_dim(&self) -> usize {
        self.dim
    }

    fn coefficients(&mut self, t: f64, grid: &Grid, out: &mut NodeCoefficients) -> Result<()> {
        out.fill_from(self, t, grid);
        Ok(())
    }

    fn base_reaction(&self) -> Arc<ReactionField> {
        self.reaction.clone()
    }

    fn lower_lipschitz(&self) -> f64 {
        self.lower_lipschitz
    }
}

impl Operator for &OperatorCoefficients {
    fn space_dim(&self) -> usize {
        self.dim
    }

    fn coefficients(&mut self, t: f64, grid: &Grid, out: &mut NodeCoefficients) -> Result<()> {
        out.fill_from(self, t, grid);
        Ok(())
    }

    fn base_reaction(&self) -> Arc<ReactionField> {
        self.reaction.clone()
    }

    fn lower_lipschitz(&self) -> f64 {
        self.lower_lipschitz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_detect_bad_models() {
        let ok = OperatorCoefficients::parse(&["1", "0.5", "0.5", "1"], &["x", "0"], "-0.5*r + sin(x)", -0.5).unwrap();
        let pts: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![0.1, 0.2]), (0.5, vec![-1.0, 2.0])];
        ok.check_invariants(&pts, &[-1.0, 0.0, 2.0]).unwrap();
        let not_psd = OperatorCoefficients::parse(&["1", "2", "2", "1"], &["0", "0"], "0", 0.0).unwrap();
        assert!(not_psd.check_invariants(&pts, &[0.0]).is_err());
        let bad_c = ok.clone().with_lower_lipschitz(0.0);
        assert!(bad_c.check_invariants(&pts, &[-1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn folding_matches_general_evaluation() {
        let op = OperatorCoefficients::parse(&["1"], &["0"], "x*r + cos(x)", -5.0).unwrap();
        let grid = Grid::parse("-1:1:5").unwrap();
        let mut nc = NodeCoefficients::new(1, grid.len(), op.reaction().clone());
        nc.fill_from(&op, 0.0, &grid);
        nc.scale.iter_mut().for_each(|s| *s = 2.5);
        nc.shift.iter_mut().for_each(|h| *h = -0.3);
        nc.kappa.iter_mut().for_each(|k| *k = 0.7);
        let general: Vec<f64> = (0..grid.len()).map(|i| nc.reaction(i, 1.3)).collect();
        nc.fold_affine();
        for (i, g) in general.iter().enumerate() {
            assert!((nc.reaction(i, 1.3) - g).abs() < 1e-13);
        }
    }
}
