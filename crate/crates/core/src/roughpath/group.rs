//! Elements of the step-2 free nilpotent group over `R^d`.

use crate::error::{Error, Result};

/// Level-1 increment plus level-2 iterated integral (`d x d`, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement2 {
    inc: Vec<f64>,
    level2: Vec<f64>,
}

impl GroupElement2 {
    pub fn identity(d: usize) -> Self {
        Self {
            inc: vec![0.0; d],
            level2: vec![0.0; d * d],
        }
    }

    pub fn new(inc: Vec<f64>, level2: Vec<f64>) -> Result<Self> {
        let d = inc.len();
        if level2.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: level2.len(),
                context: "level-2 tensor size",
            });
        }
        Ok(Self { inc, level2 })
    }

    /// Signature of the straight segment with increment `dz`.
    pub fn segment(dz: &[f64]) -> Self {
        let d = dz.len();
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] = 0.5 * dz[i] * dz[j];
            }
        }
        Self {
            inc: dz.to_vec(),
            level2,
        }
    }

    /// Zero increment with antisymmetric area `area[i][j] = -area[j][i]`.
    pub fn pure_area(d: usize, area: &[f64]) -> Self {
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] = 0.5 * (area[i * d + j] - area[j * d + i]);
            }
        }
        Self {
            inc: vec![0.0; d],
            level2,
        }
    }

    pub fn dim(&self) -> usize {
        self.inc.len()
    }

    pub fn inc(&self) -> &[f64] {
        &self.inc
    }

    pub fn level2(&self) -> &[f64] {
        &self.level2
    }

    #[inline]
    pub fn l2(&self, i: usize, j: usize) -> f64 {
        self.level2[i * self.dim() + j]
    }

    /// Antisymmetric part `(L_ij - L_ji) / 2` (the Lévy area).
    #[inline]
    pub fn area(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.l2(i, j) - self.l2(j, i))
    }

    pub fn is_area_free(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (i + 1..d).all(|j| self.area(i, j).abs() <= tol))
    }

    /// Chen product `self ⊗ other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.concat_assign(other)?;
        Ok(out)
    }

    pub fn concat_assign(&mut self, other: &Self) -> Result<()> {
        let d = self.dim();
        if other.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: other.dim(),
                context: "Chen product",
            });
        }
        for i in 0..d {
            for j in 0..d {
                self.level2[i * d + j] += other.level2[i * d + j] + self.inc[i] * other.inc[j];
            }
        }
        for (a, b) in self.inc.iter_mut().zip(&other.inc) {
            *a += b;
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        let d = self.dim();
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] = -self.level2[i * d + j] + self.inc[i] * self.inc[j];
            }
        }
        Self {
            inc: self.inc.iter().map(|v| -v).collect(),
            level2,
        }
    }

    /// Largest entry of `Sym(level2) - inc ⊗ inc / 2`.
    pub fn geometric_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let sym = 0.5 * (self.l2(i, j) + self.l2(j, i));
                worst = worst.max((sym - 0.5 * self.inc[i] * self.inc[j]).abs());
            }
        }
        worst
    }

    /// Element over the first fraction `lambda` of a segment whose increment is spread
    /// linearly and whose area accrues at a uniform rate. Splitting this way is
    /// consistent with the Chen product: `portion(l) ⊗ portion_rest(l) = self`.
    pub fn portion(&self, lambda: f64) -> Self {
        let d = self.dim();
        let inc: Vec<f64> = self.inc.iter().map(|v| lambda * v).collect();
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] =
                    0.5 * inc[i] * inc[j] + lambda * self.area(i, j);
            }
        }
        Self { inc, level2 }
    }

    /// Push-forward under the linear map `m` (`out_dim x d`, row-major).
    pub fn map_linear(&self, m: &[f64], out_dim: usize) -> Result<Self> {
        let d = self.dim();
        if m.len() != out_dim * d {
            return Err(Error::DimensionMismatch {
                expected: out_dim * d,
                got: m.len(),
                context: "linear map on group element",
            });
        }
        let inc: Vec<f64> = (0..out_dim)
            .map(|a| (0..d).map(|i| m[a * d + i] * self.inc[i]).sum())
            .collect();
        let mut tmp = vec![0.0; out_dim * d];
        for a in 0..out_dim {
            for j in 0..d {
                tmp[a * d + j] = (0..d).map(|i| m[a * d + i] * self.level2[i * d + j]).sum();
            }
        }
        let mut level2 = vec![0.0; out_dim * out_dim];
        for a in 0..out_dim {
            for b in 0..out_dim {
                level2[a * out_dim + b] = (0..d).map(|j| tmp[a * d + j] * m[b * d + j]).sum();
            }
        }
        Ok(Self { inc, level2 })
    }

    /// Homogeneous norm `max(|inc|, (2 max|Anti(level2)|)^{1/2})`.
    pub fn homogeneous_norm(&self) -> f64 {
        let d = self.dim();
        let lvl1 = self.inc.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut a = 0.0f64;
        for i in 0..d {
            for j in i + 1..d {
                a = a.max(self.area(i, j).abs());
            }
        }
        lvl1.max((2.0 * a).sqrt())
    }
}

/// Chen product of two elements.
pub fn chen_concat(a: &GroupElement2, b: &GroupElement2) -> Result<GroupElement2> {
    a.concat(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &GroupElement2, b: &GroupElement2, tol: f64) -> bool {
        a.inc().iter().zip(b.inc()).all(|(x, y)| (x - y).abs() < tol)
            && a.level2().iter().zip(b.level2()).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn segment_signature() {
        let g = GroupElement2::segment(&[1.0, 2.0]);
        assert_eq!(g.level2(), &[0.5, 1.0, 1.0, 2.0]);
        assert_eq!(g.geometric_defect(), 0.0);
    }

    #[test]
    fn two_segments_area() {
        let a = GroupElement2::segment(&[1.0, 0.0]);
        let b = GroupElement2::segment(&[0.0, 1.0]);
        let c = chen_concat(&a, &b).unwrap();
        assert_eq!(c.inc(), &[1.0, 1.0]);
        assert_eq!(c.l2(0, 1), 1.0);
        assert_eq!(c.l2(1, 0), 0.0);
        assert_eq!(c.area(0, 1), 0.5);
    }

    #[test]
    fn identity_and_inverse() {
        let x = GroupElement2::segment(&[0.3, -1.1, 2.0])
            .concat(&GroupElement2::segment(&[1.0, 0.2, -0.4]))
            .unwrap();
        let id = GroupElement2::identity(3);
        assert_eq!(id.concat(&x).unwrap(), x);
        assert!(close(&x.concat(&x.inverse()).unwrap(), &id, 1e-14));
        assert!(close(&x.inverse().concat(&x).unwrap(), &id, 1e-14));
    }

    #[test]
    fn portion_splits_consistently() {
        let x = GroupElement2::segment(&[0.3, -1.1])
            .concat(&GroupElement2::pure_area(2, &[0.0, 0.7, -0.7, 0.0]))
            .unwrap();
        let first = x.portion(0.3);
        let rest = first.inverse().concat(&x).unwrap();
        assert!(close(&rest, &x.portion(0.7), 1e-14));
        assert!(close(&first.concat(&rest).unwrap(), &x, 1e-14));
    }

    #[test]
    fn dimension_mismatch() {
        let a = GroupElement2::identity(2);
        let b = GroupElement2::identity(3);
        assert!(chen_concat(&a, &b).is_err());
    }
}
