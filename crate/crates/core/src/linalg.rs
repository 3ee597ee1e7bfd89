//! Small dense routines shared by the GP and DPP code.
//!
//! Matrices here are tiny (a batch worth of rows, or a few hundred
//! observations), so plain row-major `Vec`s are used instead of pulling the
//! heavier `nalgebra` machinery into the hot loops.

/// Lower-triangular Cholesky factor of a symmetric matrix stored row-major
/// in `a` (`n * n` entries). Returns `None` when a pivot is not strictly
/// positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` for a row-major lower-triangular `L`.
pub fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Determinant by Gaussian elimination with partial pivoting. Consumes the
/// scratch buffer `a` (row-major `n * n`).
pub fn det_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for c in col + 1..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
    }
    det
}

/// Determinant of a symmetric positive semidefinite matrix. Uses a Cholesky
/// factorization when it succeeds and falls back to pivoted elimination for
/// singular inputs; tiny negative results from round-off are clamped to 0.
pub fn psd_det(a: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if let Some(l) = cholesky(a, n) {
        return (0..n).map(|i| l[i * n + i]).product::<f64>().powi(2);
    }
    let mut scratch = a.to_vec();
    det_in_place(&mut scratch, n).max(0.0)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
