//! Flow data frozen at one time on every node of the space grid.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;

use super::system::Layout;

/// Largest admissible `|log E|`.
pub const MAX_LOG_SCALE: f64 = 700.0;
/// Largest admissible condition number of `Dψ`.
pub const MAX_JACOBIAN_CONDITION: f64 = 1e8;

/// `ψ_t`, its derivatives, derivatives of the inverse along `ψ_t(x)`, the log-scale
/// `I = log E` and the shift `θ` (each with first and second derivatives) at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleSlice {
    pub t: f64,
    pub n: usize,
    pub len: usize,
    /// `ψ_t(x)`, `len x n`
    pub psi: Vec<f64>,
    /// `Dψ_t(x)`, `len x n x n`, entry `[a][b] = ∂ψ^a/∂x^b`
    pub jac: Vec<f64>,
    /// `D²ψ_t(x)`, `len x n x n x n`
    pub hess: Vec<f64>,
    /// `Dψ_t^{-1}` at `ψ_t(x)` (= inverse of `Dψ_t(x)`)
    pub inv_jac: Vec<f64>,
    /// `D²ψ_t^{-1}` at `ψ_t(x)`, entry `[k][i][j]`
    pub inv_hess: Vec<f64>,
    pub log_scale: Vec<f64>,
    pub d_log_scale: Vec<f64>,
    pub d2_log_scale: Vec<f64>,
    pub theta: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub d2theta: Vec<f64>,
    /// `ψ_t^{-1}(y)` at the grid nodes `y`, when computed
    pub psi_inv: Option<Vec<f64>>,
}

impl BundleSlice {
    /// Identity flow, unit scale and zero shift.
    pub fn identity(t: f64, grid: &Grid) -> Self {
        let n = grid.dim();
        let len = grid.len();
        let mut states = vec![0.0; len * Layout::new(n).len];
        let layout = Layout::new(n);
        let mut x = vec![0.0; n];
        for i in 0..len {
            grid.point(i, &mut x);
            layout.initial(t, &x, &mut states[i * layout.len..(i + 1) * layout.len]);
        }
        let mut s = Self::from_states(t, &layout, &states).expect("identity flow is regular");
        s.psi_inv = Some(s.psi.clone());
        s
    }

    /// Derived data from raw per-node states; checks scale overflow and flow degeneracy.
    pub fn from_states(t: f64, layout: &Layout, states: &[f64]) -> Result<Self> {
        let n = layout.n;
        let s = layout.len;
        let len = states.len() / s;
        let (n2, n3) = (n * n, n * n * n);
        let mut out = Self {
            t,
            n,
            len,
            psi: Vec::with_capacity(len * n),
            jac: Vec::with_capacity(len * n2),
            hess: Vec::with_capacity(len * n3),
            inv_jac: vec![0.0; len * n2],
            inv_hess: vec![0.0; len * n3],
            log_scale: Vec::with_capacity(len),
            d_log_scale: Vec::with_capacity(len * n),
            d2_log_scale: Vec::with_capacity(len * n2),
            theta: Vec::with_capacity(len),
            dtheta: Vec::with_capacity(len * n),
            d2theta: Vec::with_capacity(len * n2),
            psi_inv: None,
        };
        for (node, y) in states.chunks_exact(s).enumerate() {
            if let Some(k) = y.iter().position(|v| !v.is_finite()) {
                let _ = k;
                return Err(Error::NonFinite { t, node });
            }
            let li = y[layout.log_scale];
            if li.abs() > MAX_LOG_SCALE {
                return Err(Error::ScaleOverflow {
                    t,
                    node,
                    log_scale: li,
                });
            }
            let jac = &y[layout.jac..layout.jac + n2];
            let cond = linalg::condition_number(jac, n);
            if !(cond <= MAX_JACOBIAN_CONDITION) {
                return Err(Error::FlowDegenerate { t, node, cond });
            }
            let m = &mut out.inv_jac[node * n2..(node + 1) * n2];
            linalg::invert(jac, n, m);
            let h = &y[layout.hess..layout.hess + n3];
            // D²G^k_ij = -Σ_{m,a,b} M_km H^m_ab M_ai M_bj
            let ih = &mut out.inv_hess[node * n3..(node + 1) * n3];
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for mm in 0..n {
                            let mk = m[k * n + mm];
                            if mk == 0.0 {
                                continue;
                            }
                            for a in 0..n {
                                for b in 0..n {
                                    acc += mk * h[(mm * n + a) * n + b] * m[a * n + i] * m[b * n + j];
                                }
                            }
                        }
                        ih[(k * n + i) * n + j] = -acc;
                    }
                }
            }
            out.psi.extend_from_slice(&y[layout.psi..layout.psi + n]);
            out.jac.extend_from_slice(jac);
            out.hess.extend_from_slice(h);
            out.log_scale.push(li);
            out.d_log_scale.extend_from_slice(&y[layout.d_log_scale..layout.d_log_scale + n]);
            out.d2_log_scale.extend_from_slice(&y[layout.d2_log_scale..layout.d2_log_scale + n2]);
            out.theta.push(y[layout.theta]);
            out.dtheta.extend_from_slice(&y[layout.dtheta..layout.dtheta + n]);
            out.d2theta.extend_from_slice(&y[layout.d2theta..layout.d2theta + n2]);
        }
        Ok(out)
    }

    pub fn psi_at(&self, i: usize) -> &[f64] {
        &self.psi[i * self.n..(i + 1) * self.n]
    }

    pub fn jac_at(&self, i: usize) -> &[f64] {
        &self.jac[i * self.n * self.n..(i + 1) * self.n * self.n]
    }

    pub fn inv_jac_at(&self, i: usize) -> &[f64] {
        &self.inv_jac[i * self.n * self.n..(i + 1) * self.n * self.n]
    }

    pub fn inv_hess_at(&self, i: usize) -> &[f64] {
        let n3 = self.n * self.n * self.n;
        &self.inv_hess[i * n3..(i + 1) * n3]
    }

    pub fn d_log_scale_at(&self, i: usize) -> &[f64] {
        &self.d_log_scale[i * self.n..(i + 1) * self.n]
    }

    pub fn d2_log_scale_at(&self, i: usize) -> &[f64] {
        &self.d2_log_scale[i * self.n * self.n..(i + 1) * self.n * self.n]
    }

    pub fn dtheta_at(&self, i: usize) -> &[f64] {
        &self.dtheta[i * self.n..(i + 1) * self.n]
    }

    pub fn d2theta_at(&self, i: usize) -> &[f64] {
        &self.d2theta[i * self.n * self.n..(i + 1) * self.n * self.n]
    }

    /// `E = exp(I)`.
    pub fn scale(&self, i: usize) -> f64 {
        self.log_scale[i].exp()
    }

    /// `1 / E`.
    pub fn inv_scale(&self, i: usize) -> f64 {
        (-self.log_scale[i]).exp()
    }

    /// `DE = E DI`.
    pub fn d_scale(&self, i: usize, out: &mut [f64]) {
        let e = self.scale(i);
        for (o, d) in out.iter_mut().zip(self.d_log_scale_at(i)) {
            *o = e * d;
        }
    }

    /// `D²E = E (DI ⊗ DI + D²I)`.
    pub fn d2_scale(&self, i: usize, out: &mut [f64]) {
        let n = self.n;
        let e = self.scale(i);
        let di = self.d_log_scale_at(i);
        let d2i = self.d2_log_scale_at(i);
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = e * (di[a] * di[b] + d2i[a * n + b]);
            }
        }
    }

    /// `max |ψ_t(x) - x|` over the nodes.
    pub fn max_displacement(&self, grid: &Grid) -> f64 {
        let mut x = vec![0.0; self.n];
        (0..self.len)
            .map(|i| {
                grid.point(i, &mut x);
                self.psi_at(i)
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Flow slices at a sequence of output times over one space grid.
#[derive(Clone, Debug)]
pub struct FlowBundle {
    pub grid: Grid,
    pub slices: Vec<BundleSlice>,
}

impl FlowBundle {
    pub fn identity(grid: &Grid, times: &[f64]) -> Self {
        Self {
            grid: grid.clone(),
            slices: times.iter().map(|&t| BundleSlice::identity(t, grid)).collect(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.t).collect()
    }

    /// Slice stored at time `t` (within `1e-12`).
    pub fn slice_at(&self, t: f64) -> Result<&BundleSlice> {
        self.slices
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or(Error::TimeOutOfRange {
                t,
                horizon: self.slices.last().map_or(0.0, |s| s.t),
            })
    }

    pub fn last(&self) -> &BundleSlice {
        self.slices.last().expect("bundle has slices")
    }

    /// One CSV block per slice with columns
    /// `t, x.., psi.., J.., H.., I, DI.., D2I.., theta, Dtheta.., D2theta.., psi_inv..`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let n = self.grid.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("psi{i}")));
        for a in 1..=n {
            for b in 1..=n {
                header.push(format!("J{a}{b}"));
            }
        }
        for a in 1..=n {
            for b in 1..=n {
                for c in 1..=n {
                    header.push(format!("H{a}{b}{c}"));
                }
            }
        }
        header.push("I".into());
        header.extend((1..=n).map(|i| format!("DI{i}")));
        for a in 1..=n {
            for b in 1..=n {
                header.push(format!("D2I{a}{b}"));
            }
        }
        header.push("theta".into());
        header.extend((1..=n).map(|i| format!("Dtheta{i}")));
        for a in 1..=n {
            for b in 1..=n {
                header.push(format!("D2theta{a}{b}"));
            }
        }
        header.extend((1..=n).map(|i| format!("psi_inv{i}")));
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        let mut x = vec![0.0; n];
        for s in &self.slices {
            for i in 0..s.len {
                self.grid.point(i, &mut x);
                let n2 = n * n;
                let n3 = n2 * n;
                let mut row: Vec<f64> = vec![s.t];
                row.extend_from_slice(&x);
                row.extend_from_slice(s.psi_at(i));
                row.extend_from_slice(s.jac_at(i));
                row.extend_from_slice(&s.hess[i * n3..(i + 1) * n3]);
                row.push(s.log_scale[i]);
                row.extend_from_slice(s.d_log_scale_at(i));
                row.extend_from_slice(s.d2_log_scale_at(i));
                row.push(s.theta[i]);
                row.extend_from_slice(s.dtheta_at(i));
                row.extend_from_slice(s.d2theta_at(i));
                match &s.psi_inv {
                    Some(p) => row.extend_from_slice(&p[i * n..(i + 1) * n]),
                    None => row.extend(std::iter::repeat_n(f64::NAN, n)),
                }
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(",")).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a file written by [`FlowBundle::write_csv`] on the given grid.
    pub fn read_csv(path: impl AsRef<Path>, grid: &Grid) -> Result<Self> {
        let path = path.as_ref();
        let n = grid.dim();
        let layout = Layout::new(n);
        let mut rdr = csv::Reader::from_path(path)?;
        let width = rdr.headers()?.len();
        let expected = 1 + n + (layout.len - 1) + n;
        if width != expected {
            return Err(Error::invalid(format!(
                "{}: {width} columns, expected {expected} for a {n}-dimensional bundle",
                path.display()
            )));
        }
        let mut slices = Vec::new();
        let mut states: Vec<f64> = Vec::new();
        let mut inv: Vec<f64> = Vec::new();
        let mut current_t = f64::NAN;
        let mut flush = |t: f64, states: &mut Vec<f64>, inv: &mut Vec<f64>| -> Result<()> {
            if states.is_empty() {
                return Ok(());
            }
            if states.len() != grid.len() * layout.len {
                return Err(Error::GridMismatch(format!(
                    "bundle slice t = {t} has {} nodes, grid has {}",
                    states.len() / layout.len,
                    grid.len()
                )));
            }
            let mut s = BundleSlice::from_states(t, &layout, states)?;
            if inv.iter().all(|v| v.is_finite()) {
                s.psi_inv = Some(inv.clone());
            }
            slices.push(s);
            states.clear();
            inv.clear();
            Ok(())
        };
        for rec in rdr.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            let t = row[0];
            if t != current_t {
                flush(current_t, &mut states, &mut inv)?;
                current_t = t;
            }
            states.push(t);
            states.extend_from_slice(&row[1 + n..1 + n + layout.len - 1]);
            inv.extend_from_slice(&row[width - n..]);
        }
        flush(current_t, &mut states, &mut inv)?;
        Ok(Self {
            grid: grid.clone(),
            slices,
        })
    }
}
