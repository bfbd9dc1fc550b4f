//! Level-2 rough paths as sequences of group elements over a partition.

use crate::error::{Error, Result};

use super::group::GroupElement2;
use super::path::{check_times, merge_times, SampledPath};

/// One group element per interval of a partition of `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Level2RoughPath {
    times: Vec<f64>,
    elements: Vec<GroupElement2>,
    dim: usize,
}

impl Level2RoughPath {
    pub fn new(times: Vec<f64>, elements: Vec<GroupElement2>) -> Result<Self> {
        check_times(&times)?;
        if elements.len() + 1 != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len() - 1,
                got: elements.len(),
                context: "rough path elements (one per interval)",
            });
        }
        let dim = elements[0].dim();
        if let Some(e) = elements.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: e.dim(),
                context: "rough path element dimension",
            });
        }
        Ok(Self {
            times,
            elements,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("validated non-empty")
    }

    pub fn elements(&self) -> &[GroupElement2] {
        &self.elements
    }

    pub fn element(&self, k: usize) -> &GroupElement2 {
        &self.elements[k]
    }

    /// Element over `[t_i, t_j]` by Chen composition of the stored intervals.
    pub fn over(&self, i: usize, j: usize) -> GroupElement2 {
        let mut g = GroupElement2::identity(self.dim);
        for e in &self.elements[i..j] {
            g.concat_assign(e).expect("dimensions validated");
        }
        g
    }

    pub fn total(&self) -> GroupElement2 {
        self.over(0, self.len())
    }

    /// Level-1 trace `z_t - z_0` at the partition nodes.
    pub fn trace(&self) -> SampledPath {
        let d = self.dim;
        let mut values = vec![0.0; self.times.len() * d];
        for (k, e) in self.elements.iter().enumerate() {
            for i in 0..d {
                values[(k + 1) * d + i] = values[k * d + i] + e.inc()[i];
            }
        }
        SampledPath::new(self.times.clone(), values, d).expect("validated partition")
    }

    /// Inserts the nodes `extra` (within `[0, T]`), splitting intervals with
    /// [`GroupElement2::portion`]. Existing elements are kept bit for bit.
    pub fn refine(&self, extra: &[f64]) -> Result<Self> {
        let t_end = self.horizon();
        if extra.iter().any(|&t| !(0.0..=t_end * (1.0 + 1e-12)).contains(&t)) {
            return Err(Error::TimeOutOfRange {
                t: extra.iter().copied().fold(f64::NAN, f64::max),
                horizon: t_end,
            });
        }
        let mut sorted = extra.to_vec();
        sorted.sort_by(f64::total_cmp);
        let times = merge_times(&self.times, &sorted);
        if times.len() == self.times.len() {
            return Ok(self.clone());
        }
        let mut elements = Vec::with_capacity(times.len() - 1);
        let mut k = 0;
        let mut q = 0;
        while q + 1 < times.len() {
            while self.times[k + 1] <= times[q] {
                k += 1;
            }
            let (s0, s1) = (self.times[k], self.times[k + 1]);
            let (a, b) = (times[q], times[q + 1]);
            if a == s0 && b == s1 {
                elements.push(self.elements[k].clone());
            } else {
                let e = &self.elements[k];
                let lam = (b - a) / (s1 - s0);
                // portion of the uniform-rate model is shift invariant in time
                elements.push(e.portion(lam));
            }
            q += 1;
        }
        Self::new(times, elements)
    }

    /// Coarsening onto the nodes with the given (strictly increasing) indices,
    /// which must include the first and the last node.
    pub fn coarsen(&self, nodes: &[usize]) -> Result<Self> {
        if nodes.first() != Some(&0) || nodes.last() != Some(&(self.times.len() - 1)) {
            return Err(Error::invalid("coarsening must keep both end points"));
        }
        let times = nodes.iter().map(|&k| self.times[k]).collect();
        let elements = nodes.windows(2).map(|w| self.over(w[0], w[1])).collect();
        Self::new(times, elements)
    }

    pub fn map_linear(&self, m: &[f64], out_dim: usize) -> Result<Self> {
        let elements = self
            .elements
            .iter()
            .map(|e| e.map_linear(m, out_dim))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), elements)
    }

    /// Largest geometric defect over all stored intervals.
    pub fn geometric_defect(&self) -> f64 {
        self.elements
            .iter()
            .map(GroupElement2::geometric_defect)
            .fold(0.0, f64::max)
    }

    pub fn is_area_free(&self, tol: f64) -> bool {
        self.elements.iter().all(|e| e.is_area_free(tol))
    }
}

/// Lifts the piecewise-linear interpolant: each segment carries `Δz` and `Δz ⊗ Δz / 2`.
pub fn lift_piecewise_linear(path: &SampledPath) -> Level2RoughPath {
    let d = path.dim();
    let mut dz = vec![0.0; d];
    let elements = (0..path.len() - 1)
        .map(|k| {
            let (a, b) = (path.value(k), path.value(k + 1));
            for i in 0..d {
                dz[i] = b[i] - a[i];
            }
            GroupElement2::segment(&dz)
        })
        .collect();
    Level2RoughPath::new(path.times().to_vec(), elements).expect("path already validated")
}

/// Two-dimensional rough path with zero increments and area `rate * (t - s)`.
pub fn pure_area_path(rate: f64, partition: &[f64]) -> Result<Level2RoughPath> {
    check_times(partition)?;
    let elements = partition
        .windows(2)
        .map(|w| {
            let a = rate * (w[1] - w[0]);
            GroupElement2::pure_area(2, &[0.0, a, -a, 0.0])
        })
        .collect();
    Level2RoughPath::new(partition.to_vec(), elements)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_segment_lift() {
        let p = SampledPath::new(vec![0.0, 1.0], vec![0.0, 0.0, 1.0, 2.0], 2).unwrap();
        let r = p.lift();
        assert_eq!(r.total().inc(), &[1.0, 2.0]);
        assert_eq!(r.total().level2(), &[0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_path_is_identity() {
        let p = SampledPath::new(vec![0.0, 0.5, 1.0], vec![3.0, -1.0, 3.0, -1.0, 3.0, -1.0], 2).unwrap();
        assert_eq!(p.lift().total(), GroupElement2::identity(2));
    }

    #[test]
    fn corner_path_area() {
        let p = SampledPath::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0], 2).unwrap();
        let g = p.lift().total();
        assert_eq!(g.inc(), &[1.0, 1.0]);
        assert_eq!(g.l2(0, 1), 1.0);
        assert_eq!(g.l2(1, 0), 0.0);
    }

    #[test]
    fn refine_then_coarsen_round_trip() {
        let p = SampledPath::new(vec![0.0, 0.4, 1.0], vec![0.0, 0.0, 1.0, -0.5, 0.3, 2.0], 2).unwrap();
        let r = p.lift().concat_area_for_test();
        let fine = r.refine(&[0.1, 0.7, 0.4]).unwrap();
        assert_eq!(fine.times(), &[0.0, 0.1, 0.4, 0.7, 1.0]);
        let back = fine.coarsen(&[0, 2, 4]).unwrap();
        for (a, b) in back.elements().iter().zip(r.elements()) {
            for (x, y) in a.level2().iter().zip(b.level2()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert!(fine.geometric_defect() < 1e-14);
    }

    #[test]
    fn pure_area_is_additive() {
        let r = pure_area_path(std::f64::consts::PI, &[0.0, 0.3, 1.0]).unwrap();
        assert!((r.total().area(0, 1) - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(r.total().inc(), &[0.0, 0.0]);
        let r0 = pure_area_path(0.0, &[0.0, 1.0]).unwrap();
        assert_eq!(r0.total(), GroupElement2::identity(2));
    }

    impl Level2RoughPath {
        fn concat_area_for_test(&self) -> Self {
            let elements = self
                .elements
                .iter()
                .map(|e| e.concat(&GroupElement2::pure_area(2, &[0.0, 0.2, -0.2, 0.0])).unwrap())
                .collect();
            Self::new(self.times.clone(), elements).unwrap()
        }
    }
}
