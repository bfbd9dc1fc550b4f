//! Space-time grid functions.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Values `u(t_k, x_j)` on a fixed space grid at a list of times, with the width of the
/// band along the box edges that boundary effects may have reached by each time.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Boundary-influence width per slice.
    pub boundary_width: Vec<f64>,
    /// Diagnostics attached by producers (for example interpolation outside the box).
    pub notes: Vec<String>,
}

impl GridFunction {
    pub fn new(grid: Grid, times: Vec<f64>, values: Vec<Vec<f64>>, boundary_width: Vec<f64>) -> Result<Self> {
        if values.len() != times.len() || boundary_width.len() != times.len() {
            return Err(Error::invalid("grid function needs one slice and one width per time"));
        }
        if let Some(v) = values.iter().find(|v| v.len() != grid.len()) {
            return Err(Error::GridMismatch(format!(
                "slice has {} values, grid has {} nodes",
                v.len(),
                grid.len()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if let Some(node) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { t: times[k], node });
            }
        }
        Ok(Self {
            grid,
            times,
            values,
            boundary_width,
            notes: Vec::new(),
        })
    }

    /// Single slice sampled from `f` at time `t`.
    pub fn from_fn(grid: &Grid, t: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let v = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                f(&x)
            })
            .collect();
        Self {
            grid: grid.clone(),
            times: vec![t],
            values: vec![v],
            boundary_width: vec![0.0],
            notes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("grid function has slices")
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn at_time(&self, t: f64) -> Result<&[f64]> {
        self.index_of(t).map(|k| self.slice(k)).ok_or(Error::TimeOutOfRange {
            t,
            horizon: self.times.last().copied().unwrap_or(0.0),
        })
    }

    /// Nodes farther than the boundary width of slice `k` (plus `margin`) from the box edge.
    pub fn core_mask(&self, k: usize, margin: f64) -> Vec<bool> {
        let w = self.boundary_width[k] + margin;
        (0..self.grid.len())
            .map(|i| self.grid.distance_to_boundary(i) > w)
            .collect()
    }

    fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{} vs {}",
                self.grid.spec(),
                other.grid.spec()
            )));
        }
        if self.times.len() != other.times.len()
            || self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
        {
            return Err(Error::GridMismatch("time slices differ".into()));
        }
        Ok(())
    }

    /// Per-slice `sup |u - v|` over the nodes that are in the core of both functions.
    pub fn sup_diff_core(&self, other: &GridFunction) -> Result<Vec<f64>> {
        self.check_same(other)?;
        Ok((0..self.len())
            .map(|k| {
                let w = self.boundary_width[k].max(other.boundary_width[k]);
                (0..self.grid.len())
                    .filter(|&i| self.grid.distance_to_boundary(i) > w)
                    .map(|i| (self.values[k][i] - other.values[k][i]).abs())
                    .fold(0.0, f64::max)
            })
            .collect())
    }

    /// `sup |u(t) - v(t)|` at the points `pts` (flattened), interpolating both.
    pub fn sup_diff_at_points(&self, other: &GridFunction, t: f64, pts: &[f64]) -> Result<f64> {
        let n = self.grid.dim();
        let (u, v) = (self.at_time(t)?, other.at_time(t)?);
        Ok(pts
            .chunks_exact(n)
            .map(|x| (self.grid.interpolate(u, x).0 - other.grid.interpolate(v, x).0).abs())
            .fold(0.0, f64::max))
    }

    /// `u + c` on every slice.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            for x in v.iter_mut() {
                *x += c;
            }
        }
        out
    }

    pub fn sup_norm(&self, k: usize) -> f64 {
        self.values[k].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal integral of slice `k` over the box.
    pub fn mass(&self, k: usize) -> f64 {
        self.grid.integrate(&self.values[k])
    }

    /// Columns `t, x1..xn, u`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        let n = self.grid.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("u".into());
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        let mut x = vec![0.0; n];
        for (t, v) in self.times.iter().zip(&self.values) {
            for (i, u) in v.iter().enumerate() {
                self.grid.point(i, &mut x);
                write!(w, "{t}").map_err(io)?;
                for xi in &x {
                    write!(w, ",{xi}").map_err(io)?;
                }
                writeln!(w, ",{u}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a file written by [`GridFunction::write_csv`] on a known grid.
    pub fn read_csv(path: impl AsRef<Path>, grid: &Grid) -> Result<Self> {
        let path = path.as_ref();
        let n = grid.dim();
        let mut rdr = csv::Reader::from_path(path)?;
        if rdr.headers()?.len() != n + 2 {
            return Err(Error::GridMismatch(format!(
                "{}: expected {} columns for a {n}-dimensional grid",
                path.display(),
                n + 2
            )));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let t: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad time `{}`", &rec[0])))?;
            let u: f64 = rec[n + 1]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad value `{}`", &rec[n + 1])))?;
            if times.last() != Some(&t) {
                times.push(t);
                values.push(Vec::with_capacity(grid.len()));
            }
            values.last_mut().expect("pushed above").push(u);
        }
        let widths = vec![0.0; times.len()];
        Self::new(grid.clone(), times, values, widths)
    }
}
