//! Coefficient fields compiled from expressions, with symbolic space derivatives.

use crate::error::{Error, Result};
use crate::expr::{Expr, VarSpace, MAX_VARS};

#[inline]
pub(crate) fn pack(t: f64, x: &[f64], r: f64) -> [f64; MAX_VARS] {
    let mut v = [0.0; MAX_VARS];
    v[0] = t;
    v[1..=x.len()].copy_from_slice(x);
    v[1 + x.len()] = r;
    v
}

/// Scalar field `f(t, x)` together with its gradient and Hessian in `x`.
#[derive(Clone, Debug)]
pub struct ScalarField {
    dim: usize,
    value: Expr,
    grad: Vec<Expr>,
    hess: Vec<Expr>,
}

impl ScalarField {
    /// Builds a field from an expression over `t, x1..xn` (no `r`).
    pub fn new(value: Expr, dim: usize) -> Self {
        let grad: Vec<Expr> = (0..dim).map(|i| value.diff(1 + i)).collect();
        let mut hess = Vec::with_capacity(dim * dim);
        for gi in &grad {
            for j in 0..dim {
                hess.push(gi.diff(1 + j));
            }
        }
        Self {
            dim,
            value,
            grad,
            hess,
        }
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let space = VarSpace::new(dim, false)?;
        Ok(Self::new(Expr::parse(src, &space)?, dim))
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self::new(Expr::constant(c), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.value
    }

    pub fn gradient_exprs(&self) -> &[Expr] {
        &self.grad
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn depends_on_time(&self) -> bool {
        self.value.depends_on(0)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.value.eval(&pack(t, x, 0.0))
    }

    #[inline]
    pub fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let v = pack(t, x, 0.0);
        for (o, g) in out.iter_mut().zip(&self.grad) {
            *o = g.eval(&v);
        }
    }

    /// Row-major `n x n` Hessian.
    #[inline]
    pub fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let v = pack(t, x, 0.0);
        for (o, h) in out.iter_mut().zip(&self.hess) {
            *o = h.eval(&v);
        }
    }
}

/// Vector field `V: R^n -> R^n` (optionally time dependent).
#[derive(Clone, Debug)]
pub struct VectorField {
    comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(comps: Vec<ScalarField>) -> Result<Self> {
        let n = comps.len();
        if n == 0 {
            return Err(Error::invalid("vector field needs at least one component"));
        }
        if let Some(c) = comps.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.dim(),
                context: "vector field component space dimension",
            });
        }
        Ok(Self { comps })
    }

    pub fn parse(srcs: &[&str]) -> Result<Self> {
        let n = srcs.len();
        Self::new(
            srcs.iter()
                .map(|s| ScalarField::parse(s, n))
                .collect::<Result<_>>()?,
        )
    }

    pub fn from_exprs(exprs: Vec<Expr>) -> Result<Self> {
        let n = exprs.len();
        Self::new(exprs.into_iter().map(|e| ScalarField::new(e, n)).collect())
    }

    pub fn constant(c: &[f64]) -> Self {
        let n = c.len();
        Self {
            comps: c.iter().map(|&v| ScalarField::constant(v, n)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(ScalarField::is_zero)
    }

    pub fn depends_on_time(&self) -> bool {
        self.comps.iter().any(ScalarField::depends_on_time)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let v = pack(t, x, 0.0);
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.value.eval(&v);
        }
    }

    /// `out[i*n + j] = d V_i / d x_j`.
    #[inline]
    pub fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let v = pack(t, x, 0.0);
        let n = self.dim();
        for (i, c) in self.comps.iter().enumerate() {
            for j in 0..n {
                out[i * n + j] = c.grad[j].eval(&v);
            }
        }
    }

    /// `out[(i*n + j)*n + k] = d^2 V_i / d x_j d x_k`.
    #[inline]
    pub fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let v = pack(t, x, 0.0);
        let nn = self.dim() * self.dim();
        for (i, c) in self.comps.iter().enumerate() {
            for (jk, h) in c.hess.iter().enumerate() {
                out[i * nn + jk] = h.eval(&v);
            }
        }
    }

    /// Divergence expression `sum_i d V_i / d x_i`.
    pub fn divergence(&self) -> Expr {
        self.comps
            .iter()
            .enumerate()
            .fold(Expr::constant(0.0), |acc, (i, c)| Expr::add(acc, c.grad[i].clone()))
    }

    /// Lie bracket `[self, other] = D other . self - D self . other` as a new field.
    pub fn bracket(&self, other: &VectorField) -> Result<VectorField> {
        let n = self.dim();
        if other.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: other.dim(),
                context: "Lie bracket",
            });
        }
        let comps = (0..n)
            .map(|i| {
                let mut acc = Expr::constant(0.0);
                for j in 0..n {
                    acc = Expr::add(
                        acc,
                        Expr::mul(other.comps[i].grad[j].clone(), self.comps[j].value.clone()),
                    );
                    acc = Expr::sub(
                        acc,
                        Expr::mul(self.comps[i].grad[j].clone(), other.comps[j].value.clone()),
                    );
                }
                acc
            })
            .collect();
        VectorField::from_exprs(comps)
    }
}

/// Semi-linear reaction term `c(t, x, r)`.
#[derive(Clone, Debug)]
pub struct ReactionField {
    dim: usize,
    value: Expr,
    dr: Expr,
    affine: bool,
}

impl ReactionField {
    pub fn new(value: Expr, dim: usize) -> Self {
        let r = 1 + dim;
        let dr = value.diff(r);
        let affine = !dr.depends_on(r);
        Self {
            dim,
            value,
            dr,
            affine,
        }
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let space = VarSpace::new(dim, true)?;
        Ok(Self::new(Expr::parse(src, &space)?, dim))
    }

    pub fn linear(k: f64, dim: usize) -> Self {
        Self::new(Expr::mul(Expr::constant(k), Expr::var(1 + dim)), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.value
    }

    pub fn is_affine(&self) -> bool {
        self.affine
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], r: f64) -> f64 {
        self.value.eval(&pack(t, x, r))
    }

    #[inline]
    pub fn d_r(&self, t: f64, x: &[f64], r: f64) -> f64 {
        self.dr.eval(&pack(t, x, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_derivatives() {
        let f = ScalarField::parse("sin(x1) * x2^2 + t", 2).unwrap();
        let x = [0.4, -1.2];
        let mut g = [0.0; 2];
        let mut h = [0.0; 4];
        f.gradient(0.3, &x, &mut g);
        f.hessian(0.3, &x, &mut h);
        assert!((g[0] - 0.4f64.cos() * 1.44).abs() < 1e-14);
        assert!((g[1] - 0.4f64.sin() * 2.0 * -1.2).abs() < 1e-14);
        assert!((h[0] + 0.4f64.sin() * 1.44).abs() < 1e-14);
        assert!((h[1] - h[2]).abs() < 1e-14);
        assert!((h[3] - 2.0 * 0.4f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn bracket_of_rotation_fields() {
        // [d/dx, x d/dy] = d/dy
        let a = VectorField::parse(&["1", "0"]).unwrap();
        let b = VectorField::parse(&["0", "x1"]).unwrap();
        let c = a.bracket(&b).unwrap();
        let mut out = [0.0; 2];
        c.eval(0.0, &[0.7, 0.2], &mut out);
        assert_eq!(out, [0.0, 1.0]);
    }

    #[test]
    fn reaction_affinity() {
        assert!(ReactionField::parse("2*r + x", 1).unwrap().is_affine());
        assert!(!ReactionField::parse("r^3", 1).unwrap().is_affine());
        let c = ReactionField::parse("sin(r) * x", 1).unwrap();
        assert!((c.d_r(0.0, &[2.0], 0.5) - 2.0 * 0.5f64.cos()).abs() < 1e-14);
    }
}
