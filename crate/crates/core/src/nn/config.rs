use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Reconstruction loss plus the latent k-NN anchor term.
    AnchorAe,
    /// Reconstruction loss only; the anchor term is never evaluated.
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_anchor: f64,
    pub k_neighbors: usize,
    pub threshold_sigma: f64,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub min_training_observations: usize,
    /// Upper bound on stored training latents used for the k-NN diagnostic.
    pub latent_reference_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::AnchorAe,
            hidden_dim: 16,
            latent_dim: 5,
            epochs: 150,
            batch_size: 16,
            lambda_anchor: 0.1,
            k_neighbors: 3,
            threshold_sigma: 1.5,
            leaky_slope: 0.2,
            learning_rate: 1e-3,
            min_training_observations: 100,
            latent_reference_size: 512,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    /// Anchor weight actually applied in the loss.
    pub fn effective_lambda(&self) -> f64 {
        match self.kind {
            ModelKind::AnchorAe => self.lambda_anchor,
            ModelKind::Autoencoder => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("model config: {m}")));
        if self.hidden_dim < 2 {
            return fail("hidden_dim must be at least 2");
        }
        if self.latent_dim == 0 || self.latent_dim >= INPUT_DIM {
            return fail("latent_dim must be in 1..6 (bottleneck)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive");
        }
        if self.k_neighbors == 0 || self.k_neighbors >= self.batch_size {
            return fail("k_neighbors must be positive and below batch_size");
        }
        if !(self.lambda_anchor.is_finite() && self.lambda_anchor >= 0.0) {
            return fail("lambda_anchor must be a non-negative number");
        }
        if !(self.threshold_sigma.is_finite() && self.threshold_sigma > 0.0) {
            return fail("threshold_sigma must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return fail("leaky_slope must be in [0, 1)");
        }
        if self.min_training_observations == 0 {
            return fail("min_training_observations must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!((c.hidden_dim, c.latent_dim, c.epochs, c.batch_size), (16, 5, 150, 16));
        assert_eq!((c.lambda_anchor, c.k_neighbors, c.threshold_sigma), (0.1, 3, 1.5));
        assert_eq!(c.leaky_slope, 0.2);
    }

    #[test]
    fn rejects_non_bottleneck_and_large_k() {
        let c = ModelConfig { latent_dim: 6, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { k_neighbors: 16, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
