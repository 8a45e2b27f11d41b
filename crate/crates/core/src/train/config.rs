use serde::{Deserialize, Serialize};

use crate::data::AugmentSpec;
use crate::error::{Error, Result};
use crate::train::AdamW;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    pub optimizer: AdamW,
    /// λ: weight of the autoencoder reconstruction term. Only used when the
    /// autoencoder is enabled.
    pub reconstruction_weight: f64,
    /// Std of the Gaussian noise added to inputs when λ > 0.
    pub denoise_sigma: f64,
    /// Global gradient-norm cap.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Top up minority classes with noisy copies before training.
    pub balance: bool,
    /// Re-draw a geometric augmentation of every training image each epoch.
    pub augment: bool,
    pub augment_spec: AugmentSpec,
    /// Seeds batch order, augmentation and input noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 500,
            lr0: 1e-4,
            decay_factor: 0.5,
            decay_every: 30,
            optimizer: AdamW::default(),
            reconstruction_weight: 0.0,
            denoise_sigma: 0.1,
            grad_clip: None,
            balance: false,
            augment: false,
            augment_spec: AugmentSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Batch 8 and 200 epochs; everything else at the defaults.
    pub fn toy() -> Self {
        Self {
            batch_size: 8,
            epochs: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch_size and decay_every must be >= 1".into()));
        }
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.lr0) || !finite_pos(self.decay_factor) {
            return Err(Error::Config("lr0 and decay_factor must be finite and > 0".into()));
        }
        if !(self.reconstruction_weight.is_finite() && self.reconstruction_weight >= 0.0) {
            return Err(Error::Config("reconstruction_weight must be finite and >= 0".into()));
        }
        if !(self.denoise_sigma.is_finite() && self.denoise_sigma >= 0.0) {
            return Err(Error::Config("denoise_sigma must be finite and >= 0".into()));
        }
        if self.grad_clip.is_some_and(|c| !finite_pos(c)) {
            return Err(Error::Config("grad_clip must be finite and > 0".into()));
        }
        self.optimizer.validate()?;
        self.augment_spec.validate()
    }
}

/// `lr0 · decay_factor^⌊epoch / decay_every⌋`
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let k = (epoch / cfg.decay_every).min(i32::MAX as usize) as i32;
    cfg.lr0 * cfg.decay_factor.powi(k)
}
