//! Tensor-product space grids over a box, stored row-major with the last axis fastest.

use crate::error::{Error, Result};

/// Uniform axis with `n` nodes spanning `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("axis bounds [{lo}, {hi}] are not an interval")));
        }
        if n < 3 {
            return Err(Error::invalid(format!("axis needs at least 3 nodes, got {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("grid needs at least one axis"));
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].n;
        }
        let len = strides[0] * axes[0].n;
        Ok(Self { axes, strides, len })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize, dim: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lo, hi, n)?; dim])
    }

    /// Parses `lo:hi:n[,lo:hi:n...]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let axes = spec
            .split(',')
            .map(|part| {
                let f: Vec<&str> = part.trim().split(':').collect();
                if f.len() != 3 {
                    return Err(Error::invalid(format!("grid axis `{part}` is not lo:hi:n")));
                }
                let num = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number `{s}` in grid spec")))
                };
                let n = f[2]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad node count `{}` in grid spec", f[2])))?;
                Axis::new(num(f[0])?, num(f[1])?, n)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].step()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::step).fold(f64::INFINITY, f64::min)
    }

    /// Multi-index of the linear node index.
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for k in 0..self.dim() {
            out[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
    }

    pub fn axis_index(&self, idx: usize, k: usize) -> usize {
        (idx / self.strides[k]) % self.axes[k].n
    }

    pub fn point(&self, idx: usize, out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.axes[k].node(self.axis_index(idx, k));
        }
    }

    pub fn point_vec(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point(idx, &mut p);
        p
    }

    /// True when the node lies on the outer face of the box.
    pub fn is_edge(&self, idx: usize) -> bool {
        (0..self.dim()).any(|k| {
            let i = self.axis_index(idx, k);
            i == 0 || i + 1 == self.axes[k].n
        })
    }

    /// Distance from the node to the nearest face of the box.
    pub fn distance_to_boundary(&self, idx: usize) -> f64 {
        (0..self.dim())
            .map(|k| {
                let a = &self.axes[k];
                let x = a.node(self.axis_index(idx, k));
                (x - a.lo).min(a.hi - x)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(x)
            .all(|(a, &v)| v >= a.lo - 1e-12 && v <= a.hi + 1e-12)
    }

    /// Multilinear interpolation of nodal `values` at `x`. Points outside the box are
    /// clamped to it; the flag reports whether clamping happened.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> (f64, bool) {
        let d = self.dim();
        let mut outside = false;
        let mut base = 0usize;
        let mut frac = [0.0f64; 8];
        let mut step = [0usize; 8];
        for k in 0..d {
            let a = &self.axes[k];
            let h = a.step();
            let mut s = (x[k] - a.lo) / h;
            if !(s >= 0.0) {
                outside |= s < -1e-9 || s.is_nan();
                s = 0.0;
            }
            let top = (a.n - 1) as f64;
            if s > top {
                outside |= s > top + 1e-9;
                s = top;
            }
            let mut i = s.floor() as usize;
            if i >= a.n - 1 {
                i = a.n - 2;
            }
            frac[k] = s - i as f64;
            step[k] = self.strides[k];
            base += i * self.strides[k];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner & (1 << k) != 0 {
                    w *= frac[k];
                    idx += step[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        (acc, outside)
    }

    /// Trapezoidal integral of nodal values over the box.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for (idx, v) in values.iter().enumerate() {
            let mut w = 1.0;
            for k in 0..self.dim() {
                let i = self.axis_index(idx, k);
                let a = &self.axes[k];
                w *= if i == 0 || i + 1 == a.n { 0.5 * a.step() } else { a.step() };
            }
            total += w * v;
        }
        total
    }

    pub fn spec(&self) -> String {
        self.axes
            .iter()
            .map(|a| format!("{}:{}:{}", a.lo, a.hi, a.n))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_layout() {
        let g = Grid::parse("-1:1:5, 0:2:3").unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.stride(0), 3);
        let mut p = [0.0; 2];
        g.point(7, &mut p);
        assert_eq!(p, [0.0, 1.0]);
        assert!(g.is_edge(0));
        assert!(!g.is_edge(7));
        assert!(Grid::parse("0:1").is_err());
        assert!(Grid::parse("1:0:5").is_err());
    }

    #[test]
    fn interpolation_is_exact_for_bilinear() {
        let g = Grid::parse("0:1:4,-1:1:5").unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        let vals: Vec<f64> = (0..g.len()).map(|i| f(&g.point_vec(i))).collect();
        for x in [[0.1, 0.3], [0.77, -0.95], [1.0, 1.0], [0.0, -1.0]] {
            let (v, out) = g.interpolate(&vals, &x);
            assert!((v - f(&x)).abs() < 1e-13);
            assert!(!out);
        }
        let (_, out) = g.interpolate(&vals, &[1.5, 0.0]);
        assert!(out);
    }

    #[test]
    fn trapezoid_integral() {
        let g = Grid::parse("0:2:201").unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| g.point_vec(i)[0]).collect();
        assert!((g.integrate(&vals) - 2.0).abs() < 1e-12);
    }
}
