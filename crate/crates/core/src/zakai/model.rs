//! Filtering models and the coefficients of their Zakai equation.
//!
//! Signal and observation:
//!
//! `dX = V0(t,X) dt + Σ_k V_k(t,X) dB̃_k + Σ_j σ_j(t,X) dB_j`,
//! `dZ = η(t,X) dt + dB`.
//!
//! With `G = V0·D + ½Tr[(VVᵀ + σσᵀ) D²]` and `N_j = σ_j·D + η_j`, the unnormalized
//! conditional density solves `du = (G* - ½ Σ N*_j N*_j) u dt + Σ N*_j u ∘ dZ^j`.
//! Expanding the adjoints with `Q = VVᵀ + σσᵀ` and `μ_j = η_j - div σ_j`:
//!
//! - `N*_j u = -σ_j·Du + μ_j u`;
//! - second-order part of the drift: `½ VVᵀ` (the `σσᵀ` halves cancel);
//! - first-order part: `β_b = Σ_a ∂_a Q_ab - V0_b - ½ Σ_j (Σ_a σ_ja ∂_a σ_jb - 2 μ_j σ_jb)`;
//! - zeroth-order part: `γ = ½ Σ_ab ∂_a ∂_b Q_ab - div V0 - ½ Σ_j (μ_j² - σ_j·Dμ_j)`.
//!
//! In the form `∂_t u + L(u) = Σ Λ_k(u) ż^k` this is `A = ½ VVᵀ`, `b = -β`,
//! `c(r) = -γ r`, gradient noise `-σ_j` and multiplicative noise `μ_j`, both driven by
//! `Z^j`.
//!
//! Worked example (`n = 1`, `V0 = 0`, `V = v`, `σ = s`, `η = x`): `A = v²/2`,
//! `b = -s x`, `c(r) = ½(x² - s) r`, gradient field `-s`, `ν = x`.

use serde::{Deserialize, Serialize};

use crate::coeffs::{NoiseSpec, OperatorCoefficients};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarSpace};
use crate::field::{ReactionField, ScalarField, VectorField};
use crate::roughpath::{Level2RoughPath, SampledPath};

/// Signal–observation model with expression coefficients over `t, x1..xn`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilteringModel {
    pub dim: usize,
    /// `V0`, one expression per component.
    pub drift: Vec<String>,
    /// Columns `V_k` driven by the signal noise `B̃`.
    #[serde(default)]
    pub diffusion: Vec<Vec<String>>,
    /// Columns `σ_j` driven by the observation noise `B`; empty for an uncorrelated model.
    #[serde(default)]
    pub correlation: Vec<Vec<String>>,
    /// `η`, one expression per observation channel.
    pub observation: Vec<String>,
    pub horizon: f64,
    /// Independent Gaussian prior per coordinate.
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl FilteringModel {
    /// `dX = -X dt + 0.5 dB̃ + 0.3 dB`, `dZ = tanh(X) dt + dB`, `T = 1`, prior `N(0, 0.5²)`.
    pub fn smoke() -> Self {
        Self {
            dim: 1,
            drift: strings(&["-x"]),
            diffusion: vec![strings(&["0.5"])],
            correlation: vec![strings(&["0.3"])],
            observation: strings(&["tanh(x)"]),
            horizon: 1.0,
            prior_mean: vec![0.0],
            prior_std: vec![0.5],
        }
    }

    /// [`FilteringModel::smoke`] without the correlation.
    pub fn smoke_uncorrelated() -> Self {
        Self {
            correlation: Vec::new(),
            ..Self::smoke()
        }
    }

    /// Scalar signal observed through two channels, correlated with the first: the
    /// Stratonovich correction depends on the Lévy area of the observation.
    pub fn two_channel() -> Self {
        Self {
            dim: 1,
            drift: strings(&["-x"]),
            diffusion: vec![strings(&["0.5"])],
            correlation: vec![strings(&["0.4"]), strings(&["0"])],
            observation: strings(&["tanh(x)", "0.5*sin(x)"]),
            horizon: 1.0,
            prior_mean: vec![0.0],
            prior_std: vec![0.5],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.len()
    }

    pub fn is_correlated(&self) -> bool {
        !self.correlation.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Model("signal dimension must be positive".into()));
        }
        if self.drift.len() != n {
            return Err(Error::Model(format!("drift needs {n} components, got {}", self.drift.len())));
        }
        if self.diffusion.iter().chain(&self.correlation).any(|c| c.len() != n) {
            return Err(Error::Model(format!("every diffusion and correlation column needs {n} components")));
        }
        if self.observation.is_empty() {
            return Err(Error::Model("at least one observation channel is required".into()));
        }
        if self.is_correlated() && self.correlation.len() != self.obs_dim() {
            return Err(Error::Model(format!(
                "{} correlation columns for {} observation channels",
                self.correlation.len(),
                self.obs_dim()
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Model("horizon must be positive".into()));
        }
        if self.prior_mean.len() != n || self.prior_std.len() != n || self.prior_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Model("prior needs n means and n positive standard deviations".into()));
        }
        self.exprs().map(|_| ())
    }

    pub(crate) fn exprs(&self) -> Result<ModelExprs> {
        let vs = VarSpace::new(self.dim, false)?;
        let parse = |s: &String| Expr::parse(s, &vs);
        let column = |c: &Vec<String>| c.iter().map(parse).collect::<Result<Vec<_>>>();
        let sigma = if self.is_correlated() {
            self.correlation.iter().map(column).collect::<Result<Vec<_>>>()?
        } else {
            vec![vec![Expr::constant(0.0); self.dim]; self.obs_dim()]
        };
        Ok(ModelExprs {
            v0: column(&self.drift)?,
            v: self.diffusion.iter().map(column).collect::<Result<_>>()?,
            sigma,
            eta: column(&self.observation)?,
        })
    }

    /// Density of the prior at `x`.
    pub fn prior_density(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.prior_mean.iter().zip(&self.prior_std))
            .map(|(x, (m, s))| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
            .product()
    }
}

pub(crate) struct ModelExprs {
    pub v0: Vec<Expr>,
    pub v: Vec<Vec<Expr>>,
    pub sigma: Vec<Vec<Expr>>,
    pub eta: Vec<Expr>,
}

/// Zakai coefficients of a model and the map from observation channels to driver
/// channels.
#[derive(Clone, Debug)]
pub struct ZakaiOperators {
    pub operator: OperatorCoefficients,
    pub noise: NoiseSpec,
    /// `noise.driver_dim() x obs_dim`, row-major.
    pub driver_map: Vec<f64>,
    pub obs_dim: usize,
}

impl ZakaiOperators {
    /// Driver of the noise terms built from the lifted observation.
    pub fn driver(&self, obs: &Level2RoughPath) -> Result<Level2RoughPath> {
        obs.map_linear(&self.driver_map, self.noise.driver_dim())
    }

    pub fn driver_path(&self, obs: &SampledPath) -> Result<SampledPath> {
        obs.map_linear(&self.driver_map, self.noise.driver_dim())
    }

    /// Same coefficients with the zeroth-order term replaced by `c(r) = -k r`, i.e. a
    /// `+k u dt` term in the Zakai form.
    pub fn with_linear_reaction(&self, k: f64) -> Result<Self> {
        let n = self.operator.dim();
        let vs = VarSpace::new(n, true)?;
        let r = Expr::var(vs.r().expect("r slot"));
        let reaction = ReactionField::new(Expr::mul(Expr::constant(-k), r), n);
        Ok(Self {
            operator: self.operator.clone().with_reaction(reaction, -k),
            ..self.clone()
        })
    }
}

fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms.into_iter().fold(Expr::constant(0.0), Expr::add)
}

fn scale(k: f64, e: Expr) -> Expr {
    Expr::mul(Expr::constant(k), e)
}

/// Width of the box, around the prior mean, on which the lower-Lipschitz constant of the
/// reaction is sampled.
const SAMPLE_HALF_WIDTH: f64 = 8.0;

/// Coefficients of the Stratonovich Zakai equation of `model` (see the module docs).
pub fn build_zakai_operators(model: &FilteringModel) -> Result<ZakaiOperators> {
    model.validate()?;
    let n = model.dim;
    let d = model.obs_dim();
    let ex = model.exprs()?;
    let x = |a: usize| 1 + a;

    let q = |a: usize, b: usize| {
        sum(ex
            .v
            .iter()
            .chain(&ex.sigma)
            .map(|c| Expr::mul(c[a].clone(), c[b].clone())))
    };
    let mu: Vec<Expr> = (0..d)
        .map(|j| Expr::sub(ex.eta[j].clone(), sum((0..n).map(|a| ex.sigma[j][a].diff(x(a))))))
        .collect();

    let mut diffusion = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let vv = sum(ex.v.iter().map(|c| Expr::mul(c[a].clone(), c[b].clone())));
            diffusion.push(ScalarField::new(scale(0.5, vv), n));
        }
    }
    let mut drift = Vec::with_capacity(n);
    for b in 0..n {
        let dq = sum((0..n).map(|a| q(a, b).diff(x(a))));
        let corr = sum((0..d).map(|j| {
            let transport = sum((0..n).map(|a| Expr::mul(ex.sigma[j][a].clone(), ex.sigma[j][b].diff(x(a)))));
            Expr::sub(transport, scale(2.0, Expr::mul(mu[j].clone(), ex.sigma[j][b].clone())))
        }));
        let beta = Expr::sub(Expr::sub(dq, ex.v0[b].clone()), scale(0.5, corr));
        drift.push(ScalarField::new(Expr::neg(beta), n));
    }
    let d2q = sum((0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| q(a, b).diff(x(a)).diff(x(b))));
    let div_v0 = sum((0..n).map(|a| ex.v0[a].diff(x(a))));
    let quad = sum((0..d).map(|j| {
        let transport = sum((0..n).map(|a| Expr::mul(ex.sigma[j][a].clone(), mu[j].diff(x(a)))));
        Expr::sub(Expr::mul(mu[j].clone(), mu[j].clone()), transport)
    }));
    let gamma = Expr::sub(Expr::sub(scale(0.5, d2q), div_v0), scale(0.5, quad));

    let vs_r = VarSpace::new(n, true)?;
    let r = Expr::var(vs_r.r().expect("r slot"));
    let reaction = ReactionField::new(Expr::mul(Expr::neg(gamma.clone()), r), n);
    let lower = sampled_min(&Expr::neg(gamma), model)?;
    let operator = OperatorCoefficients::new(diffusion, drift, reaction, lower)?;

    let correlated = ex.sigma.iter().flatten().any(|e| !e.is_zero());
    let multiplicative = mu.iter().any(|e| !e.is_zero());
    let sigma: Vec<VectorField> = if correlated {
        ex.sigma
            .iter()
            .map(|c| VectorField::from_exprs(c.iter().map(|e| Expr::neg(e.clone())).collect()))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let nu: Vec<ScalarField> = if multiplicative {
        mu.into_iter().map(|e| ScalarField::new(e, n)).collect()
    } else {
        Vec::new()
    };
    let groups = usize::from(correlated) + usize::from(multiplicative);
    let mut driver_map = vec![0.0; groups * d * d];
    for g in 0..groups {
        for j in 0..d {
            driver_map[(g * d + j) * d + j] = 1.0;
        }
    }
    let noise = NoiseSpec::new(n, sigma, nu, Vec::new())?;
    Ok(ZakaiOperators {
        operator,
        noise,
        driver_map,
        obs_dim: d,
    })
}

/// Minimum of `e(t, x)` over a tensor sample of the box `prior_mean ± 8` at
/// `t ∈ {0, T/2, T}`.
fn sampled_min(e: &Expr, model: &FilteringModel) -> Result<f64> {
    if let Some(c) = e.as_const() {
        return Ok(c);
    }
    let n = model.dim;
    let per_axis: usize = if n == 1 { 161 } else { 41 };
    let total = per_axis.pow(n as u32);
    let mut v = vec![0.0; 1 + n];
    let mut worst = f64::INFINITY;
    for t in [0.0, 0.5 * model.horizon, model.horizon] {
        v[0] = t;
        for idx in 0..total {
            let mut rem = idx;
            for a in 0..n {
                let k = rem % per_axis;
                rem /= per_axis;
                let s = k as f64 / (per_axis - 1) as f64;
                v[1 + a] = model.prior_mean[a] - SAMPLE_HALF_WIDTH + 2.0 * SAMPLE_HALF_WIDTH * s;
            }
            worst = worst.min(e.eval(&v));
        }
    }
    if !worst.is_finite() {
        return Err(Error::Model("reaction coefficient is not finite on the sample box".into()));
    }
    Ok(worst)
}
