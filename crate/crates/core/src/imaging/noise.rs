use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BayerFrame, PlanarImage};
use crate::error::{Error, Result};

/// White Gaussian noise. `sigma` is in 8-bit units and applied as `sigma / 255`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    #[serde(default)]
    pub clip: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            clip: false,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn new(sigma: f64, clip: bool, seed: u64) -> Self {
        Self { sigma, clip, seed }
    }

    /// Standard deviation in normalized `[0, 1]` units.
    pub fn std(&self) -> f64 {
        self.sigma / 255.0
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Adds noise in place to a raw sample buffer.
    pub fn apply(&self, samples: &mut [f32]) -> Result<()> {
        self.validate()?;
        if self.sigma == 0.0 {
            // Still clip so sigma 0 with clip behaves like hardware.
            if self.clip {
                samples.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            }
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0f64, self.std()).expect("validated sigma");
        for v in samples.iter_mut() {
            let noisy = *v as f64 + normal.sample(&mut rng);
            *v = if self.clip {
                noisy.clamp(0.0, 1.0) as f32
            } else {
                noisy as f32
            };
        }
        Ok(())
    }
}

/// Types that can receive synthetic sensor noise.
pub trait AddNoise: Sized {
    fn add_noise(&self, spec: &NoiseSpec) -> Result<Self>;
}

impl AddNoise for PlanarImage {
    fn add_noise(&self, spec: &NoiseSpec) -> Result<Self> {
        let mut out = self.clone();
        spec.apply(out.data_mut())?;
        Ok(out)
    }
}

impl AddNoise for BayerFrame {
    fn add_noise(&self, spec: &NoiseSpec) -> Result<Self> {
        let mut out = self.clone();
        spec.apply(out.data_mut())?;
        Ok(out)
    }
}
