//! Cubic smoothing spline with a residual budget: among all natural cubic
//! splines minimizing `sum (y_i - g(x_i))^2 + alpha int g''^2`, the one whose
//! residual sum of squares equals `w`.

use crate::error::{KbrError, Result};
use crate::linalg::solve_banded_spd;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    x: Vec<f64>,
    /// Fitted values at the knots.
    f: Vec<f64>,
    /// Second derivatives at the knots (zero at both ends).
    g2: Vec<f64>,
    pub alpha: f64,
    pub rss: f64,
}

struct Reinsch {
    h: Vec<f64>,
    /// Band of `R + alpha Q^T Q` is rebuilt from these per alpha.
    r: Vec<[f64; 2]>,
    qtq: Vec<[f64; 3]>,
    qty: Vec<f64>,
}

impl Reinsch {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2;
        // Column j of Q touches rows j, j+1, j+2.
        let q = |j: usize| [1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1]];
        let mut r = vec![[0.0; 2]; m];
        let mut qtq = vec![[0.0; 3]; m];
        let mut qty = vec![0.0; m];
        for j in 0..m {
            r[j][0] = (h[j] + h[j + 1]) / 3.0;
            if j + 1 < m {
                r[j][1] = h[j + 1] / 6.0;
            }
            let qj = q(j);
            qty[j] = qj[0] * y[j] + qj[1] * y[j + 1] + qj[2] * y[j + 2];
            for k in 0..3 {
                if j + k < m {
                    let qk = q(j + k);
                    // Overlap of rows j..j+2 with j+k..j+k+2.
                    qtq[j][k] = (0..3 - k).map(|t| qj[t + k] * qk[t]).sum();
                }
            }
        }
        Self { h, r, qtq, qty }
    }

    fn gamma(&self, alpha: f64) -> Result<Vec<f64>> {
        let band: Vec<Vec<f64>> = self
            .qtq
            .iter()
            .zip(&self.r)
            .map(|(q, r)| vec![r[0] + alpha * q[0], r[1] + alpha * q[1], alpha * q[2]])
            .collect();
        solve_banded_spd(&band, &self.qty)
    }

    /// `Q gamma`, length `n`.
    fn q_times(&self, gamma: &[f64]) -> Vec<f64> {
        let m = gamma.len();
        let mut out = vec![0.0; m + 2];
        for j in 0..m {
            let h0 = self.h[j];
            let h1 = self.h[j + 1];
            out[j] += gamma[j] / h0;
            out[j + 1] += gamma[j] * (-1.0 / h0 - 1.0 / h1);
            out[j + 2] += gamma[j] / h1;
        }
        out
    }
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Fits the spline whose residual sum of squares is `w` (`w = 0`
/// interpolates). A budget at or above the least-squares line's residual
/// returns that line.
pub fn smoothing_spline(x: &[f64], y: &[f64], w: f64) -> Result<SmoothingSpline> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(KbrError::InvalidConfig(format!("smoothing budget must be >= 0, got {w}")));
    }
    let n = x.len();
    if n != y.len() {
        return Err(KbrError::InvalidInput("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(KbrError::InsufficientData { needed: 3, got: n });
    }
    if x.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(KbrError::InvalidInput("x must be strictly increasing".into()));
    }
    let re = Reinsch::new(x, y);
    let fit = |alpha: f64| -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let gamma = re.gamma(alpha)?;
        let qg = re.q_times(&gamma);
        let f: Vec<f64> = y.iter().zip(&qg).map(|(yi, q)| yi - alpha * q).collect();
        let rss = qg.iter().map(|q| (alpha * q) * (alpha * q)).sum();
        let mut g2 = vec![0.0; n];
        g2[1..n - 1].copy_from_slice(&gamma);
        Ok((f, g2, rss))
    };
    let (c0, c1) = linear_fit(x, y);
    let rss_line: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    if w == 0.0 {
        let (f, g2, rss) = fit(0.0)?;
        return Ok(SmoothingSpline { x: x.to_vec(), f, g2, alpha: 0.0, rss });
    }
    if w >= rss_line {
        let f = x.iter().map(|a| c0 + c1 * a).collect();
        return Ok(SmoothingSpline { x: x.to_vec(), f, g2: vec![0.0; n], alpha: f64::INFINITY, rss: rss_line });
    }
    // Residual grows monotonically with alpha; bisect on log alpha around
    // the scale where both terms of the system matrix are comparable.
    let rmax = re.r.iter().map(|r| r[0]).fold(0.0, f64::max);
    let qmax = re.qtq.iter().map(|q| q[0]).fold(0.0, f64::max);
    let unit = rmax / qmax;
    let (mut lo, mut hi) = ((unit * 1e-12).ln(), (unit * 1e12).ln());
    let mut best = fit(hi.exp())?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = fit(mid.exp())?;
        if r.2 > w {
            hi = mid;
        } else {
            lo = mid;
            best = r;
        }
        if (hi - lo) < 1e-12 {
            break;
        }
    }
    let alpha = lo.exp();
    let (f, g2, rss) = if best.2 <= w { best } else { fit(alpha)? };
    Ok(SmoothingSpline { x: x.to_vec(), f, g2, alpha, rss })
}

impl SmoothingSpline {
    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1
    }

    /// Value, first and second derivative. Outside the knots the spline is
    /// continued linearly.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            let xe = if t < self.x[0] { self.x[0] } else { self.x[n - 1] };
            let (v, d, _) = self.eval(xe);
            return (v + d * (t - xe), d, 0.0);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (g0, g1) = (self.g2[i], self.g2[i + 1]);
        let v = a * self.f[i] + b * self.f[i + 1] + ((a * a * a - a) * g0 + (b * b * b - b) * g1) * h * h / 6.0;
        let d = (self.f[i + 1] - self.f[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * g0 + (3.0 * b * b - 1.0) / 6.0 * h * g1;
        (v, d, a * g0 + b * g1)
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_at_zero_budget() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64).powf(1.2) * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin()).collect();
        let s = smoothing_spline(&x, &y, 0.0).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi).0 - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_interior_curvature() {
        let x: Vec<f64> = (0..61).map(|i| i as f64 / 60.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - v + 2.5 * v * v).collect();
        let s = smoothing_spline(&x, &y, 0.0).unwrap();
        for t in [0.4, 0.5, 0.6] {
            assert!((s.eval(t).2 - 5.0).abs() < 1e-6, "{}", s.eval(t).2);
        }
    }

    #[test]
    fn residual_budget_met() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + 0.01 * ((i * 7919 % 13) as f64 - 6.0)).collect();
        let s = smoothing_spline(&x, &y, 0.01).unwrap();
        assert!((s.rss - 0.01).abs() < 1e-6, "{}", s.rss);
    }

    #[test]
    fn large_budget_gives_line_and_negative_rejected() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.5, 1.8, 3.1];
        let s = smoothing_spline(&x, &y, 100.0).unwrap();
        assert_eq!(s.eval(1.5).2, 0.0);
        assert!(smoothing_spline(&x, &y, -1.0).is_err());
        assert!(smoothing_spline(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0], 0.0).is_err());
    }
}
