//! Shock-capturing metrics for a 1D profile against its exact solution.

use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};

/// Closed interval `[a, b]`.
pub type Window = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SodRegion {
    pub shock: Window,
    pub post: Window,
}

/// Around the contact discontinuity at `t = 0.15`.
pub const SOD_REGION_1: SodRegion = SodRegion { shock: (0.62, 0.67), post: (0.64, 0.72) };
/// Around the shock at `t = 0.15`.
pub const SOD_REGION_2: SodRegion = SodRegion { shock: (0.73, 0.77), post: (0.755, 0.80) };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockMetrics {
    /// Mean absolute error over the whole grid.
    pub l1: f64,
    /// Max absolute error over the whole grid.
    pub linf: f64,
    /// 10%-90% width of the jump in the shock window; `None` when the
    /// exact solution has no jump there.
    pub thickness: Option<f64>,
    pub post_shock_osc: f64,
    pub tv: f64,
    pub window_shock: Window,
    pub window_post: Window,
}

impl ShockMetrics {
    pub fn thickness(&self) -> Result<f64> {
        self.thickness.ok_or_else(|| {
            KbrError::MetricUndefined(format!("no jump bracketed in [{}, {}]", self.window_shock.0, self.window_shock.1))
        })
    }
}

fn inside(x: f64, w: Window) -> bool {
    x >= w.0 && x <= w.1
}

/// Position where `v` crosses `level` between nodes `i` and `i + 1`.
fn crossing(x: &[f64], v: &[f64], i: usize, level: f64) -> f64 {
    let (a, b) = (v[i], v[i + 1]);
    if a == b {
        return x[i];
    }
    x[i] + (level - a) / (b - a) * (x[i + 1] - x[i])
}

fn thickness(num: &[f64], exact: &[f64], x: &[f64], w: Window) -> Option<f64> {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| inside(x[i], w)).collect();
    let (&first, &last) = (idx.first()?, idx.last()?);
    let (el, er) = (exact[first], exact[last]);
    let jump = er - el;
    if jump.abs() <= 1e-12 * el.abs().max(er.abs()).max(1.0) {
        return None;
    }
    // Work on an increasing profile: s = (v - el) / jump runs 0 -> 1.
    let s: Vec<f64> = num.iter().map(|v| (v - el) / jump).collect();
    let pairs = first..last;
    let lo = pairs.clone().find(|&i| s[i] < 0.1 && s[i + 1] >= 0.1).map(|i| crossing(x, &s, i, 0.1))?;
    let hi = pairs.rev().find(|&i| s[i] < 0.9 && s[i + 1] >= 0.9).map(|i| crossing(x, &s, i, 0.9))?;
    Some((hi - lo).abs())
}

pub fn shock_metrics(
    numerical: &[f64],
    exact: &[f64],
    grid: &[f64],
    window_shock: Window,
    window_post: Window,
) -> Result<ShockMetrics> {
    let n = grid.len();
    if n == 0 || numerical.len() != n || exact.len() != n {
        return Err(KbrError::InvalidInput("numerical, exact and grid must have one equal, nonzero length".into()));
    }
    if numerical.iter().chain(exact).any(|v| !v.is_finite()) {
        return Err(KbrError::InvalidInput("non-finite profile value".into()));
    }
    for w in [window_shock, window_post] {
        if !(w.0 < w.1) || w.0 < grid[0] || w.1 > grid[n - 1] {
            return Err(KbrError::InvalidInput(format!("window [{}, {}] not covered by the grid", w.0, w.1)));
        }
    }
    let err: Vec<f64> = numerical.iter().zip(exact).map(|(a, b)| (a - b).abs()).collect();
    let post_shock_osc = (0..n).filter(|&i| inside(grid[i], window_post)).map(|i| err[i]).fold(0.0, f64::max);
    let tv = (0..n - 1)
        .filter(|&i| inside(grid[i], window_shock) && inside(grid[i + 1], window_shock))
        .map(|i| (numerical[i + 1] - numerical[i]).abs())
        .sum();
    Ok(ShockMetrics {
        l1: err.iter().sum::<f64>() / n as f64,
        linf: err.iter().copied().fold(0.0, f64::max),
        thickness: thickness(numerical, exact, grid, window_shock),
        post_shock_osc,
        tv,
        window_shock,
        window_post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn resolved_step() {
        let x = grid(101);
        let e: Vec<f64> = x.iter().map(|&v| if v < 0.5 { 1.0 } else { 0.2 }).collect();
        let m = shock_metrics(&e, &e, &x, (0.4, 0.6), (0.55, 0.7)).unwrap();
        assert_eq!((m.l1, m.linf, m.post_shock_osc), (0.0, 0.0, 0.0));
        assert!(m.thickness().unwrap() <= 2.0 * 0.01);
        assert!((m.tv - 0.8).abs() < 1e-15);
    }

    #[test]
    fn linear_ramp() {
        let x = grid(1001);
        let e: Vec<f64> = x.iter().map(|&v| if v < 0.5 { 0.0 } else { 2.0 }).collect();
        let l = 0.1;
        let ramp: Vec<f64> = x.iter().map(|&v| (2.0 * (v - 0.45) / l).clamp(0.0, 2.0)).collect();
        let m = shock_metrics(&ramp, &e, &x, (0.3, 0.7), (0.6, 0.7)).unwrap();
        assert!((m.thickness().unwrap() - 0.8 * l).abs() < 1e-9);
        assert!((m.tv - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_window_is_undefined() {
        let x = grid(51);
        let e = vec![1.0; 51];
        let m = shock_metrics(&e, &e, &x, (0.1, 0.3), (0.1, 0.3)).unwrap();
        assert!(matches!(m.thickness(), Err(KbrError::MetricUndefined(_))));
    }
}
