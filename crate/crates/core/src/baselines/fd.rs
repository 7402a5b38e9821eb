//! Finite-difference weights on arbitrary nodes (Fornberg recursion).

use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdStencil {
    pub nodes: Vec<f64>,
    pub x0: f64,
    pub weights_d1: Vec<f64>,
    /// Present when the stencil has at least three nodes.
    pub weights_d2: Option<Vec<f64>>,
}

impl FdStencil {
    pub fn apply_d1(&self, values: &[f64]) -> f64 {
        self.weights_d1.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn apply_d2(&self, values: &[f64]) -> Option<f64> {
        self.weights_d2.as_ref().map(|w| w.iter().zip(values).map(|(w, v)| w * v).sum())
    }
}

/// Weights `c[m][j]` for derivative orders `0..=m_max` at `x0`.
fn fornberg(nodes: &[f64], x0: f64, m_max: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m_max + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m_max);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Weights reproducing polynomials up to degree `nodes.len() - 1` for the
/// derivative of the given `order` (1 or 2) at `x0`.
pub fn fd_weights(nodes: &[f64], x0: f64, order: usize) -> Result<FdStencil> {
    if !(1..=2).contains(&order) {
        return Err(KbrError::InvalidInput(format!("derivative order {order} not supported")));
    }
    if nodes.len() < order + 1 {
        return Err(KbrError::SingularStencil);
    }
    if nodes.iter().any(|v| !v.is_finite()) || !x0.is_finite() {
        return Err(KbrError::InvalidInput("non-finite stencil node".into()));
    }
    for i in 0..nodes.len() {
        for j in 0..i {
            if nodes[i] == nodes[j] {
                return Err(KbrError::SingularStencil);
            }
        }
    }
    let m_max = if nodes.len() >= 3 { 2 } else { 1 };
    let c = fornberg(nodes, x0, m_max);
    Ok(FdStencil {
        nodes: nodes.to_vec(),
        x0,
        weights_d1: c[1].clone(),
        weights_d2: (m_max >= 2).then(|| c[2].clone()),
    })
}

/// Three-point non-uniform finite differences at an arbitrary `x` from
/// sorted samples: the stencil is the three nodes closest to `x`.
pub fn fd_derivatives_at(xs: &[f64], ys: &[f64], x: f64) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return Err(KbrError::InsufficientData { needed: 3, got: n.min(ys.len()) });
    }
    let pos = xs.partition_point(|&v| v < x);
    let (mut lo, mut hi) = (pos, pos);
    while hi - lo < 3 {
        let take_left = if lo == 0 {
            false
        } else if hi == n {
            true
        } else {
            x - xs[lo - 1] <= xs[hi] - x
        };
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    let st = fd_weights(&xs[lo..hi], x, 2)?;
    let d2 = st.apply_d2(&ys[lo..hi]).unwrap();
    Ok((st.apply_d1(&ys[lo..hi]), d2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_stencils() {
        let h = 0.1;
        let s = fd_weights(&[-h, 0.0, h], 0.0, 2).unwrap();
        let d2 = s.weights_d2.unwrap();
        for (a, b) in d2.iter().zip([1.0, -2.0, 1.0]) {
            assert!((a - b / (h * h)).abs() < 1e-10);
        }
        for (a, b) in s.weights_d1.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b / (2.0 * h)).abs() < 1e-12);
        }
    }

    #[test]
    fn vandermonde_oracle() {
        let nodes = [0.0, 0.1, 0.35];
        let x0 = 0.1;
        let s = fd_weights(&nodes, x0, 1).unwrap();
        // Solve V^T w = e' directly.
        let mut a = vec![0.0; 9];
        for (j, &x) in nodes.iter().enumerate() {
            a[j] = 1.0;
            a[3 + j] = x - x0;
            a[6 + j] = (x - x0) * (x - x0);
        }
        let w = crate::linalg::solve(&a, &[0.0, 1.0, 0.0], 3).unwrap();
        for (p, q) in s.weights_d1.iter().zip(&w) {
            assert!((p - q).abs() < 1e-12);
        }
        // d/dx of 1, x, x^2 at x0.
        let poly = |k: i32| nodes.iter().map(|x| x.powi(k)).collect::<Vec<_>>();
        assert!(s.apply_d1(&poly(0)).abs() < 1e-12);
        assert!((s.apply_d1(&poly(1)) - 1.0).abs() < 1e-12);
        assert!((s.apply_d1(&poly(2)) - 2.0 * x0).abs() < 1e-12);
    }

    #[test]
    fn coincident_nodes_singular() {
        assert_eq!(fd_weights(&[0.0, 0.1, 0.1], 0.0, 1), Err(KbrError::SingularStencil));
        assert_eq!(fd_weights(&[0.0, 0.1], 0.0, 2), Err(KbrError::SingularStencil));
    }

    #[test]
    fn nearest_three_point_derivatives() {
        let xs = [0.0, 0.1, 0.25, 0.3, 0.5, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x + 3.0 * x * x).collect();
        let (d1, d2) = fd_derivatives_at(&xs, &ys, 0.27).unwrap();
        assert!((d1 - (2.0 + 6.0 * 0.27)).abs() < 1e-10);
        assert!((d2 - 6.0).abs() < 1e-9);
    }
}
