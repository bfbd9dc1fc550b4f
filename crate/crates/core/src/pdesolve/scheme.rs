//! Monotone explicit finite-difference step for `∂_t u = Tr[A D²u] - b·Du - c(t,x,u)`.
//!
//! Second derivatives use the 7-point cross stencil (axis neighbours weighted
//! `a_kk/h_k² - Σ_{l≠k} |a_kl|/(h_k h_l)`, one diagonal pair per sign of `a_kl`), first
//! derivatives are upwinded on the sign of `b`, the reaction is explicit. Edge nodes keep
//! their previous value.

use rayon::prelude::*;

use crate::coeffs::NodeCoefficients;
use crate::grid::Grid;

/// Neighbour offsets of the stencil for a grid.
#[derive(Clone, Debug)]
pub struct Stencil {
    dim: usize,
    h: Vec<f64>,
    /// `+e_k, -e_k` for each axis, then `(+k,+l), (-k,-l), (+k,-l), (-k,+l)` for `k < l`
    offsets: Vec<isize>,
    interior: Vec<bool>,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.dim();
        let mut offsets = Vec::new();
        for k in 0..n {
            let s = grid.stride(k) as isize;
            offsets.push(s);
            offsets.push(-s);
        }
        for k in 0..n {
            for l in k + 1..n {
                let (sk, sl) = (grid.stride(k) as isize, grid.stride(l) as isize);
                offsets.extend([sk + sl, -sk - sl, sk - sl, -sk + sl]);
            }
        }
        Self {
            dim: n,
            h: (0..n).map(|k| grid.spacing(k)).collect(),
            offsets,
            interior: (0..grid.len()).map(|i| !grid.is_edge(i)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.interior[i]
    }

    /// Weights of `u_j - u_i` at node `i`. Returns `false` when the diffusion matrix is
    /// not diagonally dominant there; an axis weight is then negative.
    pub fn weights(&self, c: &NodeCoefficients, i: usize, w: &mut [f64]) -> bool {
        let n = self.dim;
        let a = c.a_at(i);
        let b = c.b_at(i);
        let mut dominant = true;
        for k in 0..n {
            let hk = self.h[k];
            let mut axis = a[k * n + k] / (hk * hk);
            for l in 0..n {
                if l != k {
                    axis -= 0.5 * (a[k * n + l] + a[l * n + k]).abs() / (hk * self.h[l]);
                }
            }
            if axis < -1e-14 * a[k * n + k].abs().max(1e-300) {
                dominant = false;
            }
            let up = (-b[k]).max(0.0) / hk;
            let down = b[k].max(0.0) / hk;
            w[2 * k] = axis + up;
            w[2 * k + 1] = axis + down;
        }
        let mut idx = 2 * n;
        for k in 0..n {
            for l in k + 1..n {
                let akl = 0.5 * (a[k * n + l] + a[l * n + k]);
                let d = akl.abs() / (self.h[k] * self.h[l]);
                let (same, cross) = if akl >= 0.0 { (d, 0.0) } else { (0.0, d) };
                w[idx] = same;
                w[idx + 1] = same;
                w[idx + 2] = cross;
                w[idx + 3] = cross;
                idx += 4;
            }
        }
        dominant
    }
}

/// Diagnostics of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    /// Largest `Σ w + |∂_r c|` over interior nodes.
    pub max_rate: f64,
    pub non_dominant: usize,
}

/// Stability rate (inverse of the largest stable step) over the interior nodes.
pub fn stability_rate(stencil: &Stencil, c: &NodeCoefficients, u: &[f64]) -> StepStats {
    let width = stencil.width();
    let (max_rate, non_dominant) = (0..u.len())
        .into_par_iter()
        .with_min_len(2048)
        .filter(|&i| stencil.is_interior(i))
        .map_init(
            || vec![0.0; width],
            |w, i| {
                let dom = stencil.weights(c, i, w);
                let sum: f64 = w.iter().map(|v| v.max(0.0)).sum();
                (sum + c.reaction_dr(i, u[i]).abs(), usize::from(!dom))
            },
        )
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    StepStats {
        max_rate,
        non_dominant,
    }
}

/// One explicit step of length `dt` from `u` into `out`.
pub fn explicit_step(stencil: &Stencil, c: &NodeCoefficients, u: &[f64], dt: f64, out: &mut [f64]) {
    let width = stencil.width();
    out.par_iter_mut()
        .with_min_len(2048)
        .enumerate()
        .for_each_init(
            || vec![0.0; width],
            |w, (i, o)| {
                let ui = u[i];
                if !stencil.is_interior(i) {
                    *o = ui;
                    return;
                }
                stencil.weights(c, i, w);
                let mut acc = 0.0;
                for (wk, off) in w.iter().zip(&stencil.offsets) {
                    if *wk != 0.0 {
                        let j = (i as isize + off) as usize;
                        acc += wk * (u[j] - ui);
                    }
                }
                *o = ui + dt * (acc - c.reaction(i, ui));
            },
        );
}
