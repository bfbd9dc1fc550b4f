//! Piecewise-linear sampled paths.

use crate::error::{Error, Result};

use super::lift::Level2RoughPath;

/// A `d`-dimensional path sampled on a strictly increasing partition of `[0, T]`,
/// interpolated linearly between nodes. Values are stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::invalid("a path needs at least two time nodes"));
    }
    if times[0] != 0.0 {
        return Err(Error::invalid(format!("paths start at t = 0, got {}", times[0])));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::invalid(format!(
                "times must be strictly increasing and finite ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Sorted union of two partitions, merging nodes closer than `1e-12 * T`.
pub(crate) fn merge_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let tol = 1e-12 * a.last().copied().unwrap_or(1.0).abs().max(1.0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        match out.last() {
            Some(&last) if next - last <= tol => {}
            _ => out.push(next),
        }
    }
    out
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        check_times(&times)?;
        if dim == 0 {
            return Err(Error::invalid("path dimension must be positive"));
        }
        if values.len() != times.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: times.len() * dim,
                got: values.len(),
                context: "path values (nodes x dim)",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(Self { times, values, dim })
    }

    pub fn from_fn(times: Vec<f64>, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; times.len() * dim];
        for (k, &t) in times.iter().enumerate() {
            f(t, &mut values[k * dim..(k + 1) * dim]);
        }
        Self::new(times, values, dim)
    }

    /// Uniform partition of `[0, horizon]` into `steps` intervals.
    pub fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
        (0..=steps)
            .map(|k| if k == steps { horizon } else { horizon * k as f64 / steps as f64 })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("validated non-empty")
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Index `k` of the segment `[t_k, t_{k+1}]` containing `t` (clamped).
    pub fn segment_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.times.len() - 2)
    }

    /// Linear interpolation at `t` (clamped to `[0, T]`).
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, self.horizon());
        let k = self.segment_index(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.value(k), self.value(k + 1));
        for i in 0..self.dim {
            out[i] = a[i] + w * (b[i] - a[i]);
        }
    }

    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(t, &mut out);
        out
    }

    /// Derivative on segment `k`.
    pub fn slope(&self, k: usize, out: &mut [f64]) {
        let dt = self.times[k + 1] - self.times[k];
        let (a, b) = (self.value(k), self.value(k + 1));
        for i in 0..self.dim {
            out[i] = (b[i] - a[i]) / dt;
        }
    }

    /// `max_k |z(t_k)|` in the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| self.value(k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `max_k |z(t_k) - z(0)|`.
    pub fn sup_excursion(&self) -> f64 {
        let z0 = self.value(0);
        (0..self.len())
            .map(|k| {
                self.value(k)
                    .iter()
                    .zip(z0)
                    .map(|(v, w)| (v - w) * (v - w))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Re-samples the path on another partition of the same horizon.
    pub fn resample(&self, times: Vec<f64>) -> Result<Self> {
        let d = self.dim;
        Self::from_fn(times, d, |t, out| self.eval(t, out))
    }

    /// Restriction to every `stride`-th node (the last node is always kept).
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("subsample stride must be positive"));
        }
        let mut idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        if *idx.last().unwrap() != self.len() - 1 {
            idx.push(self.len() - 1);
        }
        let times = idx.iter().map(|&k| self.times[k]).collect();
        let values = idx.iter().flat_map(|&k| self.value(k).to_vec()).collect();
        Self::new(times, values, self.dim)
    }

    /// Pointwise sum on the union partition (both linear interpolants are kept exactly).
    pub fn add(&self, other: &SampledPath) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
                context: "path sum",
            });
        }
        if (other.horizon() - self.horizon()).abs() > 1e-12 * self.horizon().max(1.0) {
            return Err(Error::invalid("path sum needs equal horizons"));
        }
        let times = merge_times(&self.times, &other.times);
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        Self::from_fn(times, self.dim, |t, out| {
            self.eval(t, &mut a);
            other.eval(t, &mut b);
            for i in 0..out.len() {
                out[i] = a[i] + b[i];
            }
        })
    }

    /// Largest nodal distance on the union partition.
    pub fn sup_distance(&self, other: &SampledPath) -> f64 {
        let times = merge_times(&self.times, &other.times);
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        times
            .iter()
            .map(|&t| {
                self.eval(t, &mut a);
                other.eval(t, &mut b);
                a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Image under the linear map `m` (`out_dim x d`, row-major).
    pub fn map_linear(&self, m: &[f64], out_dim: usize) -> Result<Self> {
        let d = self.dim;
        if m.len() != out_dim * d {
            return Err(Error::DimensionMismatch {
                expected: out_dim * d,
                got: m.len(),
                context: "linear map on path",
            });
        }
        let values = (0..self.len())
            .flat_map(|k| {
                let v = self.value(k);
                (0..out_dim).map(move |a| (0..d).map(|i| m[a * d + i] * v[i]).sum::<f64>())
            })
            .collect();
        Self::new(self.times.clone(), values, out_dim)
    }

    /// Level-2 lift of the piecewise-linear interpolant.
    pub fn lift(&self) -> Level2RoughPath {
        super::lift::lift_piecewise_linear(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SampledPath::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], 1).is_err());
        assert!(SampledPath::new(vec![0.1, 1.0], vec![0.0; 2], 1).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![0.0; 3], 1).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![0.0, f64::NAN], 1).is_err());
    }

    #[test]
    fn eval_and_sum() {
        let a = SampledPath::new(vec![0.0, 1.0], vec![0.0, 2.0], 1).unwrap();
        let b = SampledPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!(a.eval_vec(0.25), vec![0.5]);
        let s = a.add(&b).unwrap();
        assert_eq!(s.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(s.values(), &[0.0, 2.0, 2.0]);
        assert!((a.sup_distance(&b) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn merge_dedups() {
        assert_eq!(merge_times(&[0.0, 0.5, 1.0], &[0.0, 0.25, 0.5, 1.0]), vec![0.0, 0.25, 0.5, 1.0]);
    }
}
