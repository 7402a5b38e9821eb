use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Uniform,
    /// Smooth clustering toward `x = 0.5`; `ratio` is max over min spacing.
    Clustered { ratio: f64 },
    Custom,
}

/// Node-centered 1D grid. Cell `i` spans `[x_{i-1/2}, x_{i+1/2}]`; the two
/// boundary cells are mirrored so their width equals the adjacent spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
    interfaces: Vec<f64>,
    widths: Vec<f64>,
    pub kind: GridKind,
}

impl Grid1D {
    pub fn from_nodes(nodes: Vec<f64>, kind: GridKind) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(KbrError::InsufficientData { needed: 3, got: nodes.len() });
        }
        if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KbrError::InvalidInput("grid nodes must be finite and strictly increasing".into()));
        }
        let n = nodes.len();
        let interfaces: Vec<f64> = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut widths = vec![0.0; n];
        widths[0] = nodes[1] - nodes[0];
        widths[n - 1] = nodes[n - 1] - nodes[n - 2];
        for i in 1..n - 1 {
            widths[i] = interfaces[i] - interfaces[i - 1];
        }
        Ok(Self { nodes, interfaces, widths, kind })
    }

    pub fn uniform(n: usize, a: f64, b: f64) -> Result<Self> {
        if n < 3 || !(b > a) {
            return Err(KbrError::InvalidInput(format!("uniform grid needs n >= 3 and b > a, got {n} [{a}, {b}]")));
        }
        let h = (b - a) / (n - 1) as f64;
        let nodes = (0..n).map(|i| if i + 1 == n { b } else { a + i as f64 * h }).collect();
        Self::from_nodes(nodes, GridKind::Uniform)
    }

    /// Nodes `x(s)` on `[0, 1]` with `dx/ds ~ 1 + (r - 1)(2s - 1)^2`, so the
    /// spacing is smallest at `x = 0.5` and `r` times larger at the ends.
    pub fn clustered(n: usize, ratio: f64) -> Result<Self> {
        if n < 3 || !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(KbrError::InvalidInput(format!("clustered grid needs n >= 3 and ratio >= 1, got {n} {ratio}")));
        }
        let r = ratio - 1.0;
        let map = |s: f64| {
            let t = s - 0.5;
            (s + r * 4.0 / 3.0 * t * t * t + r / 6.0) / (1.0 + r / 3.0)
        };
        let nodes = (0..n)
            .map(|i| match i {
                0 => 0.0,
                _ if i + 1 == n => 1.0,
                _ if 2 * i + 1 == n => 0.5,
                _ => map(i as f64 / (n - 1) as f64),
            })
            .collect();
        Self::from_nodes(nodes, GridKind::Clustered { ratio })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Midpoints `x_{i+1/2}`, `i = 0..n-1`.
    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}
