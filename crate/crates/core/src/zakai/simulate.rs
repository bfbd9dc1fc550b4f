//! Euler–Maruyama simulation of signal and observation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::expr::Expr;
use crate::roughpath::{steps_for, SampledPath};

use super::model::FilteringModel;

/// Simulated signal `X` and observation `Z` on a common uniform mesh.
#[derive(Clone, Debug)]
pub struct SignalObservation {
    pub signal: SampledPath,
    pub observation: SampledPath,
}

fn eval_all(exprs: &[Expr], v: &[f64], out: &mut [f64]) {
    for (o, e) in out.iter_mut().zip(exprs) {
        *o = e.eval(v);
    }
}

/// Draws `X_0` from the prior and steps both equations with mesh `mesh`; `Z_0 = 0`.
pub fn simulate_signal_observation(model: &FilteringModel, seed: u64, mesh: f64) -> Result<SignalObservation> {
    model.validate()?;
    let ex = model.exprs()?;
    let (n, d) = (model.dim, model.obs_dim());
    let steps = steps_for(mesh, model.horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = mesh.sqrt();

    let mut xs = vec![0.0; (steps + 1) * n];
    let mut zs = vec![0.0; (steps + 1) * d];
    for a in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        xs[a] = model.prior_mean[a] + model.prior_std[a] * g;
    }
    let mut v = vec![0.0; 1 + n];
    let mut drift = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut eta = vec![0.0; d];
    let mut db = vec![0.0; d];
    for k in 0..steps {
        v[0] = k as f64 * mesh;
        v[1..].copy_from_slice(&xs[k * n..(k + 1) * n]);
        eval_all(&ex.v0, &v, &mut drift);
        eval_all(&ex.eta, &v, &mut eta);
        let mut next: Vec<f64> = (0..n).map(|a| v[1 + a] + drift[a] * mesh).collect();
        for column in &ex.v {
            let g: f64 = rng.sample(StandardNormal);
            eval_all(column, &v, &mut col);
            for a in 0..n {
                next[a] += col[a] * sd * g;
            }
        }
        for b in db.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *b = sd * g;
        }
        for (j, column) in ex.sigma.iter().enumerate() {
            eval_all(column, &v, &mut col);
            for a in 0..n {
                next[a] += col[a] * db[j];
            }
        }
        xs[(k + 1) * n..(k + 2) * n].copy_from_slice(&next);
        for j in 0..d {
            zs[(k + 1) * d + j] = zs[k * d + j] + eta[j] * mesh + db[j];
        }
    }
    let times = SampledPath::uniform_times(model.horizon, steps);
    Ok(SignalObservation {
        signal: SampledPath::new(times.clone(), xs, n)?,
        observation: SampledPath::new(times, zs, d)?,
    })
}
