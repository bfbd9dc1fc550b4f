//! Outer transformation of a general (possibly nonlinear) operator
//! `F(t, x, r, p, X)` by a map `φ(t, r, x)` strictly increasing in `r`:
//!
//! `^φF = φ̇/φ′ + F(t, x, φ, Dφ + φ′p, φ″ p⊗p + Dφ′⊗p + p⊗Dφ′ + D²φ + φ′X) / φ′`
//!
//! so that `u = φ(t, v, x)` solves `∂_t u + F = 0` iff `v` solves `∂_t v + ^φF = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Expr, VarSpace, MAX_VARS};

/// Value and derivatives of `φ(t, r, x)` at one point. `d` means `∂_x`, `r` means `∂_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dr: f64,
    pub drr: f64,
    pub dx: Vec<f64>,
    pub dxr: Vec<f64>,
    /// row-major `n x n`
    pub dxx: Vec<f64>,
}

/// A map `φ(t, r, x)` with its jet.
pub trait MonotoneMap {
    fn dim(&self) -> usize;
    fn jet(&self, t: f64, r: f64, x: &[f64]) -> Result<Jet>;
}

/// `φ` given as an expression in `t, x1..xn, r`; derivatives by symbolic differentiation.
#[derive(Clone, Debug)]
pub struct SymbolicMap {
    dim: usize,
    value: Expr,
    dt: Expr,
    dr: Expr,
    drr: Expr,
    dx: Vec<Expr>,
    dxr: Vec<Expr>,
    dxx: Vec<Expr>,
}

impl SymbolicMap {
    pub fn new(value: Expr, dim: usize) -> Result<Self> {
        let vs = VarSpace::new(dim, true)?;
        let r = vs.r().expect("space with r");
        let dr = value.diff(r);
        let dx: Vec<Expr> = (0..dim).map(|i| value.diff(vs.space(i))).collect();
        let mut dxx = Vec::with_capacity(dim * dim);
        for d in &dx {
            for j in 0..dim {
                dxx.push(d.diff(vs.space(j)));
            }
        }
        Ok(Self {
            dim,
            dt: value.diff(vs.time()),
            drr: dr.diff(r),
            dxr: dx.iter().map(|d| d.diff(r)).collect(),
            dr,
            dx,
            dxx,
            value,
        })
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let vs = VarSpace::new(dim, true)?;
        Self::new(Expr::parse(src, &vs)?, dim)
    }
}

impl MonotoneMap for SymbolicMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, t: f64, r: f64, x: &[f64]) -> Result<Jet> {
        let mut v = [0.0; MAX_VARS];
        v[0] = t;
        v[1..1 + self.dim].copy_from_slice(x);
        v[1 + self.dim] = r;
        let jet = Jet {
            value: self.value.eval(&v),
            dt: self.dt.eval(&v),
            dr: self.dr.eval(&v),
            drr: self.drr.eval(&v),
            dx: self.dx.iter().map(|e| e.eval(&v)).collect(),
            dxr: self.dxr.iter().map(|e| e.eval(&v)).collect(),
            dxx: self.dxx.iter().map(|e| e.eval(&v)).collect(),
        };
        if !(jet.dr > 0.0) {
            return Err(Error::NotIncreasing(jet.dr));
        }
        Ok(jet)
    }
}

/// Inverse in `r` of a map: `φ(t, φ^{-1}(t, s, x), x) = s`, found by safeguarded Newton
/// iteration; derivatives by implicit differentiation.
#[derive(Clone, Debug)]
pub struct InverseMap<M> {
    map: M,
}

impl<M: MonotoneMap> InverseMap<M> {
    pub fn new(map: M) -> Self {
        Self { map }
    }

    fn solve(&self, t: f64, s: f64, x: &[f64]) -> Result<f64> {
        let f = |q: f64| self.map.jet(t, q, x).map(|j| (j.value - s, j.dr));
        // bracket the root
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut expand = 0;
        while f(lo)?.0 > 0.0 {
            hi = lo;
            lo *= 2.0;
            expand += 1;
            if expand > 200 {
                return Err(Error::invalid("inverse map: no bracket below"));
            }
        }
        while f(hi)?.0 < 0.0 {
            lo = hi;
            hi *= 2.0;
            expand += 1;
            if expand > 400 {
                return Err(Error::invalid("inverse map: no bracket above"));
            }
        }
        let mut q = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (g, dg) = f(q)?;
            if g == 0.0 {
                return Ok(q);
            }
            if g < 0.0 {
                lo = q;
            } else {
                hi = q;
            }
            let newton = q - g / dg;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - q).abs();
            q = next;
            if step <= 1e-15 * q.abs().max(1.0) || hi - lo <= 1e-15 * q.abs().max(1.0) {
                break;
            }
        }
        Ok(q)
    }
}

impl<M: MonotoneMap> MonotoneMap for InverseMap<M> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn jet(&self, t: f64, s: f64, x: &[f64]) -> Result<Jet> {
        let n = self.dim();
        let q = self.solve(t, s, x)?;
        let j = self.map.jet(t, q, x)?;
        let fp = j.dr;
        let dr = 1.0 / fp;
        let drr = -j.drr / (fp * fp * fp);
        let dt = -j.dt / fp;
        let dx: Vec<f64> = j.dx.iter().map(|d| -d / fp).collect();
        let dxr: Vec<f64> = (0..n).map(|a| -(j.drr * dx[a] + j.dxr[a]) / (fp * fp)).collect();
        let mut dxx = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                dxx[a * n + b] = -(j.drr * dx[a] * dx[b] + j.dxr[a] * dx[b] + dx[a] * j.dxr[b] + j.dxx[a * n + b]) / fp;
            }
        }
        Ok(Jet {
            value: q,
            dt,
            dr,
            drr,
            dx,
            dxr,
            dxx,
        })
    }
}

/// A scalar operator `F(t, x, r, p, X)` (`X` row-major).
pub trait Hamiltonian {
    fn eval(&self, t: f64, x: &[f64], r: f64, p: &[f64], xx: &[f64]) -> Result<f64>;
}

impl<F: Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64> Hamiltonian for F {
    fn eval(&self, t: f64, x: &[f64], r: f64, p: &[f64], xx: &[f64]) -> Result<f64> {
        Ok(self(t, x, r, p, xx))
    }
}

/// `^φF` as a callable.
pub struct OuterTransformed<F, M> {
    f: F,
    map: M,
}

/// Builds `^φF`; evaluation fails where `φ′ <= 0`.
pub fn outer_transform_generic<F: Hamiltonian, M: MonotoneMap>(f: F, map: M) -> OuterTransformed<F, M> {
    OuterTransformed { f, map }
}

impl<F: Hamiltonian, M: MonotoneMap> Hamiltonian for OuterTransformed<F, M> {
    fn eval(&self, t: f64, x: &[f64], r: f64, p: &[f64], xx: &[f64]) -> Result<f64> {
        let n = self.map.dim();
        let j = self.map.jet(t, r, x)?;
        let fp = j.dr;
        let pp: Vec<f64> = (0..n).map(|a| j.dx[a] + fp * p[a]).collect();
        let mut big = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                big[a * n + b] =
                    j.drr * p[a] * p[b] + j.dxr[a] * p[b] + p[a] * j.dxr[b] + j.dxx[a * n + b] + fp * xx[a * n + b];
            }
        }
        let inner = self.f.eval(t, x, j.value, &pp, &big)?;
        Ok((j.dt + inner) / fp)
    }
}

/// Largest increase of `h` under positive semidefinite increments of `X` over random
/// samples (a degenerate elliptic `h` gives a value `<= 0` up to rounding).
pub fn probe_degenerate_ellipticity<H: Hamiltonian>(h: &H, n: usize, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t = rng.random_range(0.0..1.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(-1.0..1.0);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut xx = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..=a {
                let v = rng.random_range(-1.0..1.0);
                xx[a * n + b] = v;
                xx[b * n + a] = v;
            }
        }
        let bm: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = xx.clone();
        for a in 0..n {
            for b in 0..n {
                y[a * n + b] += (0..n).map(|k| bm[a * n + k] * bm[b * n + k]).sum::<f64>();
            }
        }
        let d = h.eval(t, &x, r, &p, &y)? - h.eval(t, &x, r, &p, &xx)?;
        worst = worst.max(d);
    }
    Ok(worst)
}
