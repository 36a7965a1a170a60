use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ornstein-Uhlenbeck disturbance force on the cart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceConfig {
    /// Mean-reversion rate (1/s).
    pub rate: f64,
    /// Diffusion intensity (N·√s).
    pub intensity: f64,
    pub clamp: f64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self { rate: 2.0, intensity: 3.0, clamp: 6.0 }
    }
}

impl DisturbanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::Config("disturbance rate must be positive".into()));
        }
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::Config("disturbance intensity must be >= 0".into()));
        }
        if !(self.clamp >= 0.0) {
            return Err(Error::Config("disturbance clamp must be >= 0".into()));
        }
        Ok(())
    }

    pub fn stationary_std(&self) -> f64 {
        self.intensity / (2.0 * self.rate).sqrt()
    }
}

/// Exactly discretized OU process, started from its stationary law.
#[derive(Debug, Clone)]
pub struct OuProcess {
    value: f64,
    decay: f64,
    innovation_std: f64,
    clamp: f64,
    rng: ChaCha8Rng,
}

impl OuProcess {
    pub fn new(cfg: &DisturbanceConfig, dt: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let decay = (-cfg.rate * dt).exp();
        let innovation_std = cfg.stationary_std() * (1.0 - decay * decay).sqrt();
        let z: f64 = StandardNormal.sample(&mut rng);
        Self { value: cfg.stationary_std() * z, decay, innovation_std, clamp: cfg.clamp, rng }
    }

    /// Current (clamped) force, then advance the latent process by one step.
    pub fn sample(&mut self) -> f64 {
        let out = self.value.clamp(-self.clamp, self.clamp);
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.value = self.decay * self.value + self.innovation_std * z;
        out
    }
}
