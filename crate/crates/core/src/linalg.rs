//! Symmetric positive-definite solvers used by the mismatched-filter design.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `T x = b` for every right-hand side, `T` the symmetric Toeplitz
/// matrix with first column `col`. Levinson recursion, O(n^2) per system;
/// the Durbin part is shared by all right-hand sides.
pub fn levinson_solve(col: &[f64], rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = col.len();
    if rhs.iter().any(|b| b.len() != n) {
        return Err(Error::LengthMismatch {
            what: "toeplitz right-hand side",
            expected: n,
            actual: rhs.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0),
        });
    }
    if n == 0 {
        return Ok(rhs.to_vec());
    }
    let t0 = col[0];
    if !(t0 > 0.0) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let r: Vec<f64> = col[1..].iter().map(|v| v / t0).collect();
    let mut xs: Vec<Vec<f64>> = rhs
        .iter()
        .map(|b| {
            let mut x = Vec::with_capacity(n);
            x.push(b[0] / t0);
            x
        })
        .collect();
    if n == 1 {
        return Ok(xs);
    }
    let mut y = Vec::with_capacity(n);
    y.push(-r[0]);
    let mut alpha = -r[0];
    let mut beta = 1.0f64;
    let mut beta_min = 1.0f64;
    let mut scratch = vec![0.0; n];
    for k in 1..n {
        beta *= 1.0 - alpha * alpha;
        beta_min = beta_min.min(beta);
        if !(beta > f64::EPSILON) {
            return Err(Error::Singular {
                condition: 1.0 / beta_min.max(f64::MIN_POSITIVE),
            });
        }
        for (x, b) in xs.iter_mut().zip(rhs) {
            let proj: f64 = (0..k).map(|i| r[i] * x[k - 1 - i]).sum();
            let mu = (b[k] / t0 - proj) / beta;
            for i in 0..k {
                scratch[i] = x[i] + mu * y[k - 1 - i];
            }
            x.copy_from_slice(&scratch[..k]);
            x.push(mu);
        }
        if k < n - 1 {
            let proj: f64 = (0..k).map(|i| r[i] * y[k - 1 - i]).sum();
            alpha = -(r[k] + proj) / beta;
            for i in 0..k {
                scratch[i] = y[i] + alpha * y[k - 1 - i];
            }
            y.copy_from_slice(&scratch[..k]);
            y.push(alpha);
        }
    }
    Ok(xs)
}

/// Cholesky solve of a dense SPD system.
pub fn cholesky_solve(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::LengthMismatch {
            what: "dense right-hand side",
            expected: n,
            actual: b.len(),
        });
    }
    let diag_max = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let diag_min = (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
    let chol = a.cholesky().ok_or(Error::Singular {
        condition: if diag_min > 0.0 {
            diag_max / diag_min
        } else {
            f64::INFINITY
        },
    })?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toeplitz(col: &[f64]) -> DMatrix<f64> {
        let n = col.len();
        DMatrix::from_fn(n, n, |i, j| col[i.abs_diff(j)])
    }

    #[test]
    fn levinson_matches_cholesky() {
        let col: Vec<f64> = (0..40).map(|k| 0.8f64.powi(k) * (0.3 * k as f64).cos() + if k == 0 { 0.5 } else { 0.0 }).collect();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let fast = levinson_solve(&col, std::slice::from_ref(&b)).unwrap().remove(0);
        let dense = cholesky_solve(toeplitz(&col), &b).unwrap();
        for (a, d) in fast.iter().zip(&dense) {
            assert!((a - d).abs() < 1e-10, "{a} {d}");
        }
    }

    #[test]
    fn singular_reported() {
        // rank one: all ones
        let col = vec![1.0; 5];
        assert!(matches!(
            levinson_solve(&col, &[vec![1.0; 5]]),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            cholesky_solve(DMatrix::from_element(3, 3, 1.0), &[1.0, 2.0, 3.0]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn trivial_sizes() {
        assert_eq!(levinson_solve(&[2.0], &[vec![4.0]]).unwrap(), vec![vec![2.0]]);
        assert!(levinson_solve(&[], &[vec![]]).unwrap()[0].is_empty());
    }
}
