//! Tiny dense linear algebra for the fixed-size systems used by the
//! derivative schemes (2x2 up to 6x6) and the D-dimensional Newton step.

use crate::error::{KbrError, Result};

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`; on return `b` holds the solution.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[piv * n + col] == 0.0 || !m[piv * n + col].is_finite() {
            return Err(KbrError::IllConditioned(f64::INFINITY));
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in col + 1..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Ok(x)
}

/// Inverse by column-wise solves.
pub fn inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = solve(a, &e, n)?;
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(inv)
}

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number; infinite for singular matrices.
pub fn cond1(a: &[f64], n: usize) -> f64 {
    match inverse(a, n) {
        Ok(inv) => {
            let c = norm1(a, n) * norm1(&inv, n);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Solves a symmetric positive semi-definite system, falling back to a
/// Tikhonov-regularized solve (a pseudo-inverse surrogate) when `a` is
/// near-singular.
pub fn solve_psd(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
    if cond1(a, n) < 1e12 {
        if let Ok(x) = solve(a, b, n) {
            return x;
        }
    }
    let lambda = 1e-10 * trace.max(f64::MIN_POSITIVE);
    let mut reg = a.to_vec();
    for i in 0..n {
        reg[i * n + i] += lambda;
    }
    solve(&reg, b, n).unwrap_or_else(|_| vec![0.0; n])
}

/// Solves a symmetric positive-definite banded system by Cholesky.
/// `band[i][k]` holds `A[i][i + k]` for `k = 0..=p`.
pub fn solve_banded_spd(band: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let p = band.first().map_or(0, |r| r.len() - 1);
    // l[i][k] = L[i + k][i], lower factor stored by columns.
    let mut l = vec![vec![0.0; p + 1]; n];
    for j in 0..n {
        let mut d = band[j][0];
        for k in 1..=p.min(j) {
            d -= l[j - k][k] * l[j - k][k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(KbrError::IllConditioned(f64::INFINITY));
        }
        let d = d.sqrt();
        l[j][0] = d;
        for k in 1..=p {
            if j + k >= n {
                break;
            }
            let mut s = band[j][k];
            // Terms L[j+k][m] L[j][m] for m < j within the band.
            for m in (j + k).saturating_sub(p)..j {
                s -= l[m][j + k - m] * l[m][j - m];
            }
            l[j][k] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 1..=p.min(i) {
            s -= l[i - k][k] * y[i - k];
        }
        y[i] = s / l[i][0];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in 1..=p {
            if i + k < n {
                s -= l[i][k] * y[i + k];
            }
        }
        y[i] = s / l[i][0];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    #[test]
    fn banded_matches_dense() {
        let n = 7;
        let mut dense = vec![0.0; n * n];
        let mut band = vec![vec![0.0; 3]; n];
        for i in 0..n {
            for k in 0..3 {
                if i + k < n {
                    let v = if k == 0 { 6.0 + i as f64 } else { -1.0 / (k as f64 + i as f64) };
                    band[i][k] = v;
                    dense[i * n + i + k] = v;
                    dense[(i + k) * n + i] = v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = super::solve_banded_spd(&band, &b).unwrap();
        let y = super::solve(&dense, &b, n).unwrap();
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-13);
        }
    }

    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let a = [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|k| a[i * 3 + k] * x_true[k]).sum())
            .collect();
        let x = solve(&a, &b, 3).unwrap();
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_detected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0], 2).is_err() || cond1(&a, 2) > 1e15);
    }

    #[test]
    fn identity_condition_is_one() {
        assert_eq!(cond1(&[1.0, 0.0, 0.0, 1.0], 2), 1.0);
    }
}
