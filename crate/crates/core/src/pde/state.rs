use serde::{Deserialize, Serialize};

use crate::baselines::euler::{conserved, primitive, EulerPrimitive, GAMMA};
use crate::error::{KbrError, Result};

/// Per-node conserved variables, stored component-major: `comps[c][i]`.
/// One component for Burgers' equation, `[rho, rho u, rho E]` for Euler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservedState {
    pub comps: Vec<Vec<f64>>,
    pub time: f64,
    pub gamma: f64,
}

impl ConservedState {
    pub fn scalar(u: Vec<f64>) -> Self {
        Self { comps: vec![u], time: 0.0, gamma: GAMMA }
    }

    pub fn euler(prims: &[EulerPrimitive]) -> Self {
        let mut comps = vec![Vec::with_capacity(prims.len()); 3];
        for p in prims {
            let q = conserved(p);
            for c in 0..3 {
                comps[c].push(q[c]);
            }
        }
        Self { comps, time: 0.0, gamma: GAMMA }
    }

    pub fn len(&self) -> usize {
        self.comps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps[0].is_empty()
    }

    pub fn n_comps(&self) -> usize {
        self.comps.len()
    }

    pub fn node(&self, i: usize) -> [f64; 3] {
        [self.comps[0][i], self.comps[1][i], self.comps[2][i]]
    }

    pub fn primitive(&self, i: usize) -> EulerPrimitive {
        primitive(&self.node(i))
    }

    pub fn primitives(&self) -> Vec<EulerPrimitive> {
        (0..self.len()).map(|i| self.primitive(i)).collect()
    }

    /// `sum_i u_i dx_i` per component.
    pub fn totals(&self, widths: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.iter().zip(widths).map(|(u, w)| u * w).sum()).collect()
    }

    /// Finite values everywhere and, for Euler, positive density and
    /// internal energy.
    pub fn check(&self, step: usize) -> Result<()> {
        for (c, v) in self.comps.iter().enumerate() {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(KbrError::Unstable { step, reason: format!("non-finite component {c} at node {i}") });
            }
        }
        if self.n_comps() == 3 {
            for i in 0..self.len() {
                let [r, m, e] = self.node(i);
                let internal = e - 0.5 * m * m / r;
                if !(r > 0.0) || !(internal > 0.0) {
                    return Err(KbrError::Unstable {
                        step,
                        reason: format!("positivity lost at node {i}: rho={r}, internal energy={internal}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}
