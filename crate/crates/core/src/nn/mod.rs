//! Feed-forward network engine: tanh MLPs, input-derivative propagation,
//! reverse-mode parameter gradients and Adam.

mod adam;
mod mlp;

pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS};
pub use mlp::{param_gradient, weight_reg, DerivOrder, DerivTriple, Mlp, Tape};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Optimizer and sampling settings shared by every trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    /// Weight-regularization coefficient.
    #[serde(default)]
    pub beta_reg: f64,
    /// Scale of the uniform weight initialization.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Ratio of the last epoch's learning rate to `lr`; the rate decays
    /// geometrically per epoch. 1 keeps it constant.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
}

fn default_lr_decay() -> f64 {
    1.0
}

fn default_init_scale() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 100,
            lr: 0.002,
            seed: 0,
            beta_reg: 0.0,
            init_scale: 1.0,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.beta_reg >= 0.0) {
            return Err(Error::Config(format!("beta_reg must be >= 0, got {}", self.beta_reg)));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }

    /// Learning rate used during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay == 1.0 || self.epochs < 2 {
            return self.lr;
        }
        self.lr * self.lr_decay.powf(epoch as f64 / (self.epochs - 1) as f64)
    }
}
