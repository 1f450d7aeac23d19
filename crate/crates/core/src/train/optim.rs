//! AdamW with decoupled weight decay and linear warmup.
//!
//! At 1-based step `t` with scheduled rate `lr_t = lr · min(1, t / warmup)`:
//!
//! ```text
//! θ ← θ · (1 − lr_t · wd)
//! m ← β₁ m + (1 − β₁) g
//! v ← β₂ v + (1 − β₂) g²
//! θ ← θ − lr_t · (m / (1 − β₁ᵗ)) / (√(v / (1 − β₂ᵗ)) + ε)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_steps: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_steps: 100,
        }
    }
}

impl AdamWConfig {
    /// Learning rate at 1-based step `t`.
    pub fn lr_at(&self, t: usize) -> f64 {
        if self.warmup_steps == 0 || t >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * t as f64 / self.warmup_steps as f64
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Parameters,
    pub v: Parameters,
}

impl AdamWState {
    pub fn new(config: &ModelConfig) -> Self {
        AdamWState {
            m: Parameters::zeros(config),
            v: Parameters::zeros(config),
        }
    }
}

/// One AdamW update at 1-based step `t`. Rejects non-finite gradients before
/// touching any state, naming the offending block.
pub fn adamw_step(
    params: &mut Parameters,
    grads: &Parameters,
    state: &mut AdamWState,
    config: &AdamWConfig,
    t: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::validation("adamw steps are 1-based"));
    }
    let grad_blocks = grads.blocks();
    if grad_blocks.len() != state.m.blocks().len() || grads.shapes() != params.shapes() {
        return Err(Error::validation("gradient shapes do not match parameters"));
    }
    if let Some((name, _)) = grad_blocks.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            block: name.clone(),
            step: t,
        });
    }
    let lr = config.lr_at(t);
    let decay = 1.0 - lr * config.weight_decay;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((p, (_, g)), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grad_blocks)
        .zip(state.m.blocks_mut())
        .zip(state.v.blocks_mut())
    {
        let it = p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut()));
        for ((w, &g), (m, v)) in it {
            *w *= decay;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
