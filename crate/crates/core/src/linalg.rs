//! Small dense matrix helpers (row-major slices); closed forms for `n <= 2`.

use nalgebra::DMatrix;

/// Smallest eigenvalue of a symmetric `n x n` matrix.
pub fn min_eigenvalue_sym(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let m = 0.5 * (p + r);
            m - (0.25 * (p - r) * (p - r) + q * q).sqrt()
        }
        _ => DMatrix::from_row_slice(n, n, a)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
    }
}

/// Inverse of an `n x n` matrix into `out`; returns `false` when singular.
pub fn invert(a: &[f64], n: usize, out: &mut [f64]) -> bool {
    match n {
        1 => {
            if a[0] == 0.0 {
                return false;
            }
            out[0] = 1.0 / a[0];
            true
        }
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            if det == 0.0 || !det.is_finite() {
                return false;
            }
            out[0] = a[3] / det;
            out[1] = -a[1] / det;
            out[2] = -a[2] / det;
            out[3] = a[0] / det;
            true
        }
        _ => match DMatrix::from_row_slice(n, n, a).try_inverse() {
            Some(m) => {
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = m[(i, j)];
                    }
                }
                true
            }
            None => false,
        },
    }
}

/// Spectral condition number `s_max / s_min` (infinite when singular).
pub fn condition_number(a: &[f64], n: usize) -> f64 {
    let (smax, smin) = match n {
        1 => (a[0].abs(), a[0].abs()),
        2 => {
            // singular values of a 2x2 matrix from the invariants of AᵀA
            let fro2 = a.iter().map(|v| v * v).sum::<f64>();
            let det = (a[0] * a[3] - a[1] * a[2]).abs();
            let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
            let s1 = (0.5 * (fro2 + disc)).sqrt();
            (s1, if s1 > 0.0 { det / s1 } else { 0.0 })
        }
        _ => {
            let sv = DMatrix::from_row_slice(n, n, a).singular_values();
            (sv.max(), sv.min())
        }
    };
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_agree_with_general_path() {
        let a = [2.0, 0.3, 0.3, 0.5];
        let lam = min_eigenvalue_sym(&a, 2);
        let e = DMatrix::from_row_slice(2, 2, &a).symmetric_eigen().eigenvalues.min();
        assert!((lam - e).abs() < 1e-14);
        let m = [1.0, 2.0, -0.5, 3.0];
        let mut inv = [0.0; 4];
        assert!(invert(&m, 2, &mut inv));
        let g = DMatrix::from_row_slice(2, 2, &m).try_inverse().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[i * 2 + j] - g[(i, j)]).abs() < 1e-14);
            }
        }
        let sv = DMatrix::from_row_slice(2, 2, &m).singular_values();
        assert!((condition_number(&m, 2) - sv.max() / sv.min()).abs() < 1e-12);
        assert_eq!(condition_number(&[1.0, 2.0, 2.0, 4.0], 2), f64::INFINITY);
    }

    #[test]
    fn general_dimension() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0];
        let mut inv = [0.0; 9];
        assert!(invert(&a, 3, &mut inv));
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(min_eigenvalue_sym(&a, 3) > 0.0);
    }
}
