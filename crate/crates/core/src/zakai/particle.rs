//! Weighted particle filter used as an independent reference for the PDE filter.
//!
//! Particles follow the signal dynamics conditioned on the observation increments,
//! `dX = (V0 - σ η) dt + V dB + σ dZ`, and carry log-weights updated with
//! `η·ΔZ - |η|² Δt / 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Grid;
use crate::roughpath::SampledPath;

use super::model::FilteringModel;

#[derive(Clone, Debug)]
pub struct ParticleConfig {
    pub particles: usize,
    pub seed: u64,
    /// Resample when the effective sample size drops below this fraction of the count.
    pub resample_below: f64,
    /// Effective sample sizes below this fraction are logged as degeneracy events.
    pub degeneracy_below: f64,
}

impl ParticleConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            resample_below: 0.5,
            degeneracy_below: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegeneracyEvent {
    pub t: f64,
    pub ess: f64,
}

#[derive(Clone, Debug)]
pub struct ParticleOutput {
    /// Observation times.
    pub times: Vec<f64>,
    /// Posterior mean at each time, `times.len() x n`.
    pub mean: Vec<f64>,
    /// Posterior standard deviation per coordinate, `times.len() x n`.
    pub std: Vec<f64>,
    /// Final particle positions, `particles x n`.
    pub positions: Vec<f64>,
    /// Final normalized weights.
    pub weights: Vec<f64>,
    pub dim: usize,
    pub resamples: usize,
    pub min_ess: f64,
    pub degeneracy: Vec<DegeneracyEvent>,
}

impl ParticleOutput {
    pub fn mean_at(&self, k: usize) -> &[f64] {
        &self.mean[k * self.dim..(k + 1) * self.dim]
    }

    pub fn std_at(&self, k: usize) -> &[f64] {
        &self.std[k * self.dim..(k + 1) * self.dim]
    }

    /// Gaussian kernel density estimate of the final weighted ensemble on `grid`, with a
    /// Silverman bandwidth per coordinate.
    pub fn density(&self, grid: &Grid) -> Vec<f64> {
        let n = self.dim;
        let last = self.std_at(self.times.len() - 1);
        let ess = 1.0 / self.weights.iter().map(|w| w * w).sum::<f64>();
        let factor = (4.0 / ((n as f64 + 2.0) * ess)).powf(1.0 / (n as f64 + 4.0));
        let h: Vec<f64> = last.iter().map(|s| (s * factor).max(1e-3)).collect();
        let norm: f64 = h.iter().map(|h| h * (2.0 * std::f64::consts::PI).sqrt()).product();
        let mut x = vec![0.0; n];
        (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                let mut s = 0.0;
                for (p, w) in self.weights.iter().enumerate() {
                    let q = &self.positions[p * n..(p + 1) * n];
                    let e: f64 = (0..n).map(|a| ((x[a] - q[a]) / h[a]).powi(2)).sum();
                    s += w * (-0.5 * e).exp();
                }
                s / norm
            })
            .collect()
    }
}

fn eval_all(exprs: &[Expr], v: &[f64], out: &mut [f64]) {
    for (o, e) in out.iter_mut().zip(exprs) {
        *o = e.eval(v);
    }
}

fn normalize_log_weights(logw: &[f64], w: &mut [f64]) -> f64 {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (w, l) in w.iter_mut().zip(logw) {
        *w = (l - m).exp();
        s += *w;
    }
    for w in w.iter_mut() {
        *w /= s;
    }
    1.0 / w.iter().map(|w| w * w).sum::<f64>()
}

fn systematic_resample(rng: &mut ChaCha8Rng, w: &[f64], pos: &[f64], n: usize) -> Vec<f64> {
    let np = w.len();
    let u0: f64 = rng.random_range(0.0..1.0);
    let mut out = Vec::with_capacity(pos.len());
    let mut cum = w[0];
    let mut i = 0;
    for k in 0..np {
        let u = (u0 + k as f64) / np as f64;
        while cum < u && i + 1 < np {
            i += 1;
            cum += w[i];
        }
        out.extend_from_slice(&pos[i * n..(i + 1) * n]);
    }
    out
}

fn record(pos: &[f64], w: &[f64], n: usize, mean: &mut Vec<f64>, std: &mut Vec<f64>) {
    let mut m = vec![0.0; n];
    let mut s = vec![0.0; n];
    for (p, wp) in w.iter().enumerate() {
        for a in 0..n {
            let x = pos[p * n + a];
            m[a] += wp * x;
            s[a] += wp * x * x;
        }
    }
    for a in 0..n {
        s[a] = (s[a] - m[a] * m[a]).max(0.0).sqrt();
    }
    mean.extend(m);
    std.extend(s);
}

/// Runs the particle filter along the observation increments of `obs`.
pub fn particle_filter_oracle(model: &FilteringModel, obs: &SampledPath, cfg: &ParticleConfig) -> Result<ParticleOutput> {
    model.validate()?;
    if cfg.particles < 2 {
        return Err(Error::invalid("at least two particles are needed"));
    }
    let (n, d) = (model.dim, model.obs_dim());
    if obs.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: obs.dim(),
            context: "observation channels",
        });
    }
    let ex = model.exprs()?;
    let np = cfg.particles;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pos = vec![0.0; np * n];
    for p in 0..np {
        for a in 0..n {
            let g: f64 = rng.sample(StandardNormal);
            pos[p * n + a] = model.prior_mean[a] + model.prior_std[a] * g;
        }
    }
    let mut logw = vec![0.0; np];
    let mut w = vec![1.0 / np as f64; np];
    let times = obs.times().to_vec();
    let mut mean = Vec::with_capacity(times.len() * n);
    let mut std = Vec::with_capacity(times.len() * n);
    record(&pos, &w, n, &mut mean, &mut std);

    let mut v = vec![0.0; 1 + n];
    let mut drift = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut eta = vec![0.0; d];
    let mut dz = vec![0.0; d];
    let mut resamples = 0;
    let mut min_ess = np as f64;
    let mut degeneracy = Vec::new();
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let sd = dt.sqrt();
        for j in 0..d {
            dz[j] = obs.value(k + 1)[j] - obs.value(k)[j];
        }
        for p in 0..np {
            v[0] = times[k];
            v[1..].copy_from_slice(&pos[p * n..(p + 1) * n]);
            eval_all(&ex.v0, &v, &mut drift);
            eval_all(&ex.eta, &v, &mut eta);
            let mut next: Vec<f64> = (0..n).map(|a| v[1 + a] + drift[a] * dt).collect();
            for column in &ex.v {
                let g: f64 = rng.sample(StandardNormal);
                eval_all(column, &v, &mut col);
                for a in 0..n {
                    next[a] += col[a] * sd * g;
                }
            }
            for (j, column) in ex.sigma.iter().enumerate() {
                eval_all(column, &v, &mut col);
                for a in 0..n {
                    next[a] += col[a] * (dz[j] - eta[j] * dt);
                }
            }
            pos[p * n..(p + 1) * n].copy_from_slice(&next);
            logw[p] += (0..d).map(|j| eta[j] * dz[j] - 0.5 * eta[j] * eta[j] * dt).sum::<f64>();
        }
        let ess = normalize_log_weights(&logw, &mut w);
        min_ess = min_ess.min(ess);
        if ess < cfg.degeneracy_below * np as f64 {
            degeneracy.push(DegeneracyEvent { t: times[k + 1], ess });
        }
        record(&pos, &w, n, &mut mean, &mut std);
        if ess < cfg.resample_below * np as f64 {
            pos = systematic_resample(&mut rng, &w, &pos, n);
            logw.fill(0.0);
            w.fill(1.0 / np as f64);
            resamples += 1;
        }
    }
    Ok(ParticleOutput {
        times,
        mean,
        std,
        positions: pos,
        weights: w,
        dim: n,
        resamples,
        min_ess,
        degeneracy,
    })
}
