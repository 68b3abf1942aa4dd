use serde::{Deserialize, Serialize};

use crate::autodiff::BnMode;
use crate::error::{Error, Result};
use crate::registration::RegistrationConfig;

/// Optimization settings shared by pretraining and fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    /// Epochs (0-based) at whose start the rate is multiplied by `lr_drop_factor`.
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub loss_p: u8,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 45,
            steps_per_epoch: 100,
            learning_rate: 1e-2,
            lr_drop_epochs: vec![20, 40],
            lr_drop_factor: 0.1,
            batch_size: 8,
            patch_size: 64,
            loss_p: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for adapting an already trained network to one burst.
    pub fn finetune() -> Self {
        Self {
            epochs: 1,
            steps_per_epoch: 0,
            learning_rate: 1e-4,
            lr_drop_epochs: Vec::new(),
            batch_size: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.loss_p != 1 && self.loss_p != 2 {
            return Err(Error::config("loss_p", "must be 1 or 2"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.patch_size < 8 || !self.patch_size.is_multiple_of(2) {
            return Err(Error::config("patch_size", "must be even and at least 8"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and nonnegative"));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor.is_finite()) {
            return Err(Error::config("lr_drop_factor", "must be positive"));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_drop_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.lr_drop_factor.powi(drops as i32)
    }
}

/// Random-affinity bounds used to simulate views of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSpec {
    /// Per-axis translation bound in pixels.
    pub max_shift: f64,
    /// Rotation bound in degrees.
    pub max_rot: f64,
    /// Bound on each scale and shear perturbation of the linear part.
    pub max_scale: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            max_shift: 5.0,
            max_rot: 3.0,
            max_scale: 0.02,
        }
    }
}

impl MotionSpec {
    pub fn still() -> Self {
        Self {
            max_shift: 0.0,
            max_rot: 0.0,
            max_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.max_shift) || !ok(self.max_rot) || !ok(self.max_scale) {
            return Err(Error::config("motion", "bounds must be finite and nonnegative"));
        }
        if self.max_rot > 45.0 || self.max_scale > 0.25 {
            return Err(Error::config("motion", "rotation or scale bound too large"));
        }
        Ok(())
    }
}

/// Extra knobs of burst fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneOptions {
    pub steps_per_pair: usize,
    /// Number of passes over the pair schedule.
    pub passes: usize,
    pub bn_mode: BnMode,
    pub registration: RegistrationConfig,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        Self {
            steps_per_pair: 20,
            passes: 1,
            bn_mode: BnMode::Train,
            registration: RegistrationConfig::default(),
        }
    }
}

impl FinetuneOptions {
    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(Error::config("finetune.passes", "must be at least 1"));
        }
        if self.bn_mode == BnMode::Eval {
            return Err(Error::config(
                "finetune.bn_mode",
                "training needs batch statistics (train or batch_stats)",
            ));
        }
        self.registration.validate()
    }
}
