use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponentiated-gradient step on the probability simplex:
/// `w_j <- w_j exp(-eta g_j) / sum_k w_k exp(-eta g_k)`.
pub fn mirror_descent_step(w: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    if w.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            what: "mirror descent gradient",
            expected: w.len(),
            found: grad.len(),
        });
    }
    if w.is_empty() {
        return Ok(Vec::new());
    }
    // shift by the largest exponent so nothing overflows
    let logits: Vec<f64> = w.iter().zip(grad).map(|(wj, gj)| wj.ln() - eta * gj).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| (v / total).max(f64::MIN_POSITIVE)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, config: AdamConfig) -> Self {
        Adam {
            config,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) -> Result<()> {
        if w.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                what: "adaptive-moment state",
                expected: self.m.len(),
                found: if w.len() != self.m.len() { w.len() } else { grad.len() },
            });
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for j in 0..w.len() {
            self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * grad[j];
            self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * grad[j] * grad[j];
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            w[j] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
