//! Analytic test fields with exact derivatives.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};

pub const CAMEL_K: f64 = 0.2;
pub const RASTRIGIN_A: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Camel1d,
    Camel2d,
    Rastrigin1d,
    Sin,
    Square,
    Log,
}

impl TestFunction {
    pub const ALL: [TestFunction; 6] = [
        TestFunction::Camel1d,
        TestFunction::Camel2d,
        TestFunction::Rastrigin1d,
        TestFunction::Sin,
        TestFunction::Square,
        TestFunction::Log,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Camel1d => "camel1d",
            TestFunction::Camel2d => "camel2d",
            TestFunction::Rastrigin1d => "rastrigin1d",
            TestFunction::Sin => "sin",
            TestFunction::Square => "square",
            TestFunction::Log => "log",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Camel2d => 2,
            _ => 1,
        }
    }

    /// Sampling interval per axis.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            TestFunction::Log => (0.1, 1.0),
            _ => (0.0, 1.0),
        }
    }

    fn camel_terms(x: &[f64]) -> [(f64, [f64; 2]); 2] {
        let k2 = CAMEL_K * CAMEL_K;
        let mut out = [(0.0, [0.0; 2]); 2];
        for (j, c) in [1.0 / 3.0, 2.0 / 3.0].into_iter().enumerate() {
            let mut d = [0.0; 2];
            let mut r2 = 0.0;
            for (i, xi) in x.iter().enumerate() {
                d[i] = xi - c;
                r2 += d[i] * d[i];
            }
            out[j] = ((-r2 / k2).exp(), d);
        }
        out
    }

    fn camel_prefactor(dim: usize) -> f64 {
        1.0 / (2.0 * (CAMEL_K * PI.sqrt()).powi(dim as i32))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let t = x[0];
        match self {
            TestFunction::Camel1d | TestFunction::Camel2d => {
                let e = Self::camel_terms(&x[..self.dim()]);
                Self::camel_prefactor(self.dim()) * (e[0].0 + e[1].0)
            }
            TestFunction::Rastrigin1d => t * t - RASTRIGIN_A * (2.0 * PI * t).cos() + RASTRIGIN_A,
            TestFunction::Sin => t.sin(),
            TestFunction::Square => t * t,
            TestFunction::Log => t.ln(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let t = x[0];
        match self {
            TestFunction::Camel1d | TestFunction::Camel2d => {
                let d = self.dim();
                let p = Self::camel_prefactor(d);
                let k2 = CAMEL_K * CAMEL_K;
                (0..d).map(|i| Self::camel_terms(&x[..d]).iter().map(|(e, r)| -2.0 * r[i] / k2 * e).sum::<f64>() * p).collect()
            }
            TestFunction::Rastrigin1d => vec![2.0 * t + 2.0 * PI * RASTRIGIN_A * (2.0 * PI * t).sin()],
            TestFunction::Sin => vec![t.cos()],
            TestFunction::Square => vec![2.0 * t],
            TestFunction::Log => vec![1.0 / t],
        }
    }

    /// Row-major `D x D`.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let t = x[0];
        match self {
            TestFunction::Camel1d | TestFunction::Camel2d => {
                let d = self.dim();
                let p = Self::camel_prefactor(d);
                let k2 = CAMEL_K * CAMEL_K;
                let terms = Self::camel_terms(&x[..d]);
                let mut h = vec![0.0; d * d];
                for a in 0..d {
                    for b in 0..d {
                        let delta = if a == b { 2.0 / k2 } else { 0.0 };
                        h[a * d + b] = p * terms.iter().map(|(e, r)| (4.0 * r[a] * r[b] / (k2 * k2) - delta) * e).sum::<f64>();
                    }
                }
                h
            }
            TestFunction::Rastrigin1d => vec![2.0 + 4.0 * PI * PI * RASTRIGIN_A * (2.0 * PI * t).cos()],
            TestFunction::Sin => vec![-t.sin()],
            TestFunction::Square => vec![2.0],
            TestFunction::Log => vec![-1.0 / (t * t)],
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let h = self.hessian(x);
        (0..d).map(|i| h[i * d + i]).sum()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = KbrError;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| KbrError::InvalidConfig(format!("unknown test function '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for f in TestFunction::ALL {
            let (lo, hi) = f.domain();
            for _ in 0..50 {
                let x: Vec<f64> = (0..f.dim()).map(|_| rng.gen_range(lo + 0.01..hi - 0.01)).collect();
                let g = f.gradient(&x);
                let hs = f.hessian(&x);
                let d = f.dim();
                for i in 0..d {
                    let shifted = |s: f64| {
                        let mut y = x.clone();
                        y[i] += s;
                        y
                    };
                    let cd = (f.value(&shifted(h)) - f.value(&shifted(-h))) / (2.0 * h);
                    assert!((cd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{f} grad");
                    for j in 0..d {
                        let cdh = (f.gradient(&shifted(h))[j] - f.gradient(&shifted(-h))[j]) / (2.0 * h);
                        assert!((cdh - hs[i * d + j]).abs() < 1e-6 * (1.0 + hs[i * d + j].abs()), "{f} hessian");
                    }
                }
            }
        }
    }

    #[test]
    fn camel_peak_height() {
        // Each bump contributes prefactor * 1 at its center, plus the other
        // bump's tail exp(-(1/3)^2 / k^2).
        let p = 1.0 / (2.0 * CAMEL_K * PI.sqrt());
        let tail = (-(1.0f64 / 9.0) / (CAMEL_K * CAMEL_K)).exp();
        assert!((TestFunction::Camel1d.value(&[1.0 / 3.0]) - p * (1.0 + tail)).abs() < 1e-15);
    }
}
