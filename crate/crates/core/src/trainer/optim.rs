use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Linear warmup to `peak`, then cosine decay to `min` at `total` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup: usize,
    pub total: usize,
    pub peak: f64,
    pub min: f64,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak >= self.min) || self.min < 0.0 {
            return invalid("learning rates need peak ≥ min ≥ 0");
        }
        if self.warmup > self.total {
            return invalid("warmup steps exceed total steps");
        }
        Ok(())
    }

    /// Rate for 0-based optimizer step `step`.
    pub fn rate(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.peak * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let p = ((step - self.warmup) as f64 / span as f64).min(1.0);
        self.min + 0.5 * (self.peak - self.min) * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

/// Adam with decoupled weight decay over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update; `decay_mask[i]` selects the entries that receive weight decay.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, decay_mask: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let mut delta = m_hat / (v_hat.sqrt() + self.eps);
            if decay_mask[i] {
                delta += self.weight_decay * params[i];
            }
            params[i] -= lr * delta;
        }
    }
}
