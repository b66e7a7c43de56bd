use serde::{Deserialize, Serialize};

use super::{Grads, NnError, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer state for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || params.blocks().iter().map(|b| vec![0.0; b.value.len()]).collect();
        Adam { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update in place.
    ///
    /// Every gradient is checked before any parameter changes, so a rejected
    /// step leaves both parameters and moments untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) -> Result<(), NnError> {
        if grads.blocks.len() != params.len() || self.m.len() != params.len() {
            return Err(NnError::shape(
                "adam",
                format!("{} parameter blocks, {} gradients, {} moment buffers", params.len(), grads.blocks.len(), self.m.len()),
            ));
        }
        for (block, g) in params.blocks().iter().zip(&grads.blocks) {
            if block.value.shape() != g.shape() {
                return Err(NnError::shape(
                    "adam",
                    format!("block `{}`: parameter {:?} vs gradient {:?}", block.name, block.value.shape(), g.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient(block.name.clone()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - (beta1 as f64).powi(self.step as i32);
        let bc2 = 1.0 - (beta2 as f64).powi(self.step as i32);
        let step_size = (lr as f64 / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        for (((block, g), m), v) in params.blocks_mut().iter_mut().zip(&grads.blocks).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in block.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}
