//! The joint characteristic / scale / shift system and its state layout.
//!
//! Per grid point the state holds
//! `t, ψ, Dψ, D²ψ, I, DI, D²I, θ, Dθ, D²θ`
//! where `E = exp(I)` is the multiplicative scale and `θ` the additive shift. The
//! derivative blocks follow from differentiating the flow equations in the initial
//! point (variational equations), so every block is driven by the same increments.

use crate::coeffs::NoiseSpec;
use crate::expr::MAX_VARS;

use super::stepping::DrivenFields;

const MAXN: usize = MAX_VARS - 2;

/// Offsets of the blocks inside a state vector for space dimension `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub psi: usize,
    pub jac: usize,
    pub hess: usize,
    pub log_scale: usize,
    pub d_log_scale: usize,
    pub d2_log_scale: usize,
    pub theta: usize,
    pub dtheta: usize,
    pub d2theta: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(n: usize) -> Self {
        let psi = 1;
        let jac = psi + n;
        let hess = jac + n * n;
        let log_scale = hess + n * n * n;
        let d_log_scale = log_scale + 1;
        let d2_log_scale = d_log_scale + n;
        let theta = d2_log_scale + n * n;
        let dtheta = theta + 1;
        let d2theta = dtheta + n;
        let len = d2theta + n * n;
        Self {
            n,
            psi,
            jac,
            hess,
            log_scale,
            d_log_scale,
            d2_log_scale,
            theta,
            dtheta,
            d2theta,
            len,
        }
    }

    /// State at time `t0` of the identity flow started at `x`.
    pub fn initial(&self, t0: f64, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.fill(0.0);
        out[0] = t0;
        out[self.psi..self.psi + n].copy_from_slice(x);
        for i in 0..n {
            out[self.jac + i * n + i] = 1.0;
        }
    }

    /// End of the ψ block (time, ψ, Dψ, D²ψ).
    pub fn inner_end(&self) -> usize {
        self.log_scale
    }

    /// End of the scale block.
    pub fn scale_end(&self) -> usize {
        self.theta
    }
}

/// Fields of the joint system. Channels: `0` time, then `σ_1..σ_d1`, `ν_1..ν_d2`,
/// `g_1..g_d3`.
#[derive(Clone, Debug)]
pub struct FlowSystem {
    noise: NoiseSpec,
    layout: Layout,
    active: Vec<bool>,
}

impl FlowSystem {
    pub fn new(noise: NoiseSpec) -> Self {
        let layout = Layout::new(noise.dim());
        assert!(noise.dim() <= MAXN, "space dimension above {MAXN}");
        let mut active = vec![true];
        active.extend(noise.sigma().iter().map(|s| !s.is_zero()));
        active.extend(noise.nu().iter().map(|s| !s.is_zero()));
        active.extend(noise.g().iter().map(|s| !s.is_zero()));
        Self {
            noise,
            layout,
            active,
        }
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn sigma_field(&self, i: usize, y: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let n = l.n;
        let t = y[0];
        let psi = &y[l.psi..l.psi + n];
        let jac = &y[l.jac..l.jac + n * n];
        let hess = &y[l.hess..l.hess + n * n * n];
        let v = &self.noise.sigma()[i];
        let mut dv = [0.0; MAXN * MAXN];
        let mut d2v = [0.0; MAXN * MAXN * MAXN];
        v.eval(t, psi, &mut out[l.psi..l.psi + n]);
        v.jacobian(t, psi, &mut dv);
        v.hessian(t, psi, &mut d2v);
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += dv[a * n + m] * jac[m * n + b];
                }
                out[l.jac + a * n + b] = s;
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for m in 0..n {
                        s += dv[a * n + m] * hess[(m * n + b) * n + c];
                        for q in 0..n {
                            s += d2v[(a * n + m) * n + q] * jac[m * n + b] * jac[q * n + c];
                        }
                    }
                    out[l.hess + (a * n + b) * n + c] = s;
                }
            }
        }
    }

    /// `f(t, ψ)` together with `D(f∘ψ)` and `D²(f∘ψ)` in the initial point.
    fn composed(
        &self,
        f: &crate::field::ScalarField,
        y: &[f64],
        grad: &mut [f64; MAXN],
        hess: &mut [f64; MAXN * MAXN],
    ) -> f64 {
        let l = &self.layout;
        let n = l.n;
        let t = y[0];
        let psi = &y[l.psi..l.psi + n];
        let jac = &y[l.jac..l.jac + n * n];
        let h = &y[l.hess..l.hess + n * n * n];
        let mut g = [0.0; MAXN];
        let mut gg = [0.0; MAXN * MAXN];
        let v = f.eval(t, psi);
        f.gradient(t, psi, &mut g);
        f.hessian(t, psi, &mut gg);
        for b in 0..n {
            grad[b] = (0..n).map(|m| g[m] * jac[m * n + b]).sum();
        }
        for b in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += g[m] * h[(m * n + b) * n + c];
                    for q in 0..n {
                        s += gg[m * n + q] * jac[m * n + b] * jac[q * n + c];
                    }
                }
                hess[b * n + c] = s;
            }
        }
        v
    }

    fn nu_field(&self, j: usize, y: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let n = l.n;
        let mut grad = [0.0; MAXN];
        let mut hess = [0.0; MAXN * MAXN];
        out[l.log_scale] = self.composed(&self.noise.nu()[j], y, &mut grad, &mut hess);
        out[l.d_log_scale..l.d_log_scale + n].copy_from_slice(&grad[..n]);
        out[l.d2_log_scale..l.d2_log_scale + n * n].copy_from_slice(&hess[..n * n]);
    }

    fn g_field(&self, k: usize, y: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let n = l.n;
        let mut q = [0.0; MAXN];
        let mut qq = [0.0; MAXN * MAXN];
        let gv = self.composed(&self.noise.g()[k], y, &mut q, &mut qq);
        let e = (-y[l.log_scale]).exp();
        let di = &y[l.d_log_scale..l.d_log_scale + n];
        let d2i = &y[l.d2_log_scale..l.d2_log_scale + n * n];
        out[l.theta] = e * gv;
        for b in 0..n {
            out[l.dtheta + b] = e * (q[b] - di[b] * gv);
        }
        for b in 0..n {
            for c in 0..n {
                out[l.d2theta + b * n + c] = e
                    * (di[b] * di[c] * gv - d2i[b * n + c] * gv - di[b] * q[c] - di[c] * q[b]
                        + qq[b * n + c]);
            }
        }
    }
}

impl DrivenFields for FlowSystem {
    fn state_dim(&self) -> usize {
        self.layout.len
    }

    fn channels(&self) -> usize {
        1 + self.noise.driver_dim()
    }

    fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    fn eval(&self, k: usize, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        if k == 0 {
            out[0] = 1.0;
            return;
        }
        let (d1, d2) = (self.noise.d1(), self.noise.d2());
        let k = k - 1;
        if k < d1 {
            self.sigma_field(k, y, out);
        } else if k < d1 + d2 {
            self.nu_field(k - d1, y, out);
        } else {
            self.g_field(k - d1 - d2, y, out);
        }
    }
}

/// Only the ψ equation (time and position), used for the time-reversed inverse flow.
#[derive(Clone, Debug)]
pub struct PositionSystem<'a> {
    noise: &'a NoiseSpec,
}

impl<'a> PositionSystem<'a> {
    pub fn new(noise: &'a NoiseSpec) -> Self {
        Self { noise }
    }
}

impl DrivenFields for PositionSystem<'_> {
    fn state_dim(&self) -> usize {
        1 + self.noise.dim()
    }

    fn channels(&self) -> usize {
        1 + self.noise.driver_dim()
    }

    fn is_active(&self, k: usize) -> bool {
        k == 0 || (k <= self.noise.d1() && !self.noise.sigma()[k - 1].is_zero())
    }

    fn eval(&self, k: usize, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        if k == 0 {
            out[0] = 1.0;
        } else if k <= self.noise.d1() {
            self.noise.sigma()[k - 1].eval(y[0], &y[1..], &mut out[1..]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes() {
        assert_eq!(Layout::new(1).len, 10);
        assert_eq!(Layout::new(2).len, 29);
    }

    #[test]
    fn variational_blocks_match_finite_differences() {
        // compare the ψ-derivative blocks of U_k(state(x)) with differences in x
        let noise = NoiseSpec::parse(
            2,
            &[vec!["sin(y)", "0.3*x^2"]],
            &["x*y + cos(x)"],
            &["exp(0.2*y) * x"],
        )
        .unwrap();
        let sys = FlowSystem::new(noise);
        let l = *sys.layout();
        // a non-trivial state: ψ(x) = A x + quadratic, I(x), θ(x) consistent polynomials
        let state = |x: &[f64]| {
            let mut s = vec![0.0; l.len];
            s[0] = 0.4;
            let psi = [x[0] + 0.2 * x[1] * x[1], 0.5 * x[1] - 0.1 * x[0] * x[1]];
            s[l.psi..l.psi + 2].copy_from_slice(&psi);
            s[l.jac..l.jac + 4].copy_from_slice(&[1.0, 0.4 * x[1], -0.1 * x[1], 0.5 - 0.1 * x[0]]);
            let h = [0.0, 0.0, 0.0, 0.4, 0.0, -0.1, -0.1, 0.0];
            s[l.hess..l.hess + 8].copy_from_slice(&h);
            s[l.log_scale] = 0.3 * x[0] * x[1];
            s[l.d_log_scale..l.d_log_scale + 2].copy_from_slice(&[0.3 * x[1], 0.3 * x[0]]);
            s[l.d2_log_scale..l.d2_log_scale + 4].copy_from_slice(&[0.0, 0.3, 0.3, 0.0]);
            s
        };
        let x = [0.3, -0.7];
        let h = 1e-5;
        for k in 1..sys.channels() {
            let mut out = vec![0.0; l.len];
            sys.eval(k, &state(&x), &mut out);
            // value blocks: derivative of block `v` in x_b must equal block `dv`
            let checks: Vec<(usize, usize, usize)> = vec![
                (l.psi, l.jac, 2),
                (l.jac, l.hess, 4),
                (l.log_scale, l.d_log_scale, 1),
                (l.d_log_scale, l.d2_log_scale, 2),
                (l.theta, l.dtheta, 1),
                (l.dtheta, l.d2theta, 2),
            ];
            for (v, dv, width) in checks {
                for b in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[b] += h;
                    xm[b] -= h;
                    let mut op = vec![0.0; l.len];
                    let mut om = vec![0.0; l.len];
                    sys.eval(k, &state(&xp), &mut op);
                    sys.eval(k, &state(&xm), &mut om);
                    for a in 0..width {
                        let fd = (op[v + a] - om[v + a]) / (2.0 * h);
                        let got = out[dv + a * 2 + b];
                        assert!((fd - got).abs() < 1e-6, "channel {k} block {dv} entry {a},{b}: {fd} vs {got}");
                    }
                }
            }
        }
    }
}
