use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which rewards each agent's advantage estimate is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// The agent's own reward.
    Own,
    /// Mean of the agent's reward and its grid neighbors' rewards.
    #[default]
    Neighborhood,
    /// Mean reward over all agents.
    Team,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub clip_ratio: f64,
    pub epochs_per_update: usize,
    pub minibatches: usize,
    pub episodes_per_epoch: usize,
    pub epochs: usize,
    /// Held-out episodes per epoch; defaults to a quarter of
    /// `episodes_per_epoch`, i.e. 20% of all episodes.
    pub val_episodes: Option<usize>,
    pub max_steps: usize,
    pub entropy_coef: f64,
    pub value_clip: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    /// Poisson-resample demand for every episode.
    pub resample: bool,
    pub reward_mode: RewardMode,
    /// Divide training rewards by the running std of discounted returns.
    pub normalize_rewards: bool,
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub encoder_batch: usize,
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            gae_lambda: 0.95,
            lr_policy: 3e-4,
            lr_value: 1e-3,
            clip_ratio: 0.2,
            epochs_per_update: 4,
            minibatches: 4,
            episodes_per_epoch: 64,
            epochs: 10,
            val_episodes: None,
            max_steps: 31,
            entropy_coef: 0.01,
            value_clip: 0.2,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            resample: true,
            reward_mode: RewardMode::default(),
            normalize_rewards: true,
            encoder_hidden: 128,
            latent_dim: 16,
            encoder_batch: 8,
            kl_weight: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.lr_policy > 0.0 && self.lr_value > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.clip_ratio > 0.0 && self.value_clip > 0.0 && self.max_grad_norm > 0.0) {
            return bad("clip values must be positive");
        }
        if self.epochs_per_update == 0
            || self.minibatches == 0
            || self.episodes_per_epoch == 0
            || self.max_steps == 0
        {
            return bad("epoch, minibatch, episode and step counts must be positive");
        }
        if self.entropy_coef < 0.0 || self.vf_coef < 0.0 || self.kl_weight < 0.0 {
            return bad("loss coefficients must be nonnegative");
        }
        if self.encoder_hidden == 0 || self.latent_dim == 0 {
            return bad("encoder sizes must be positive");
        }
        Ok(())
    }

    pub fn val_episodes(&self) -> usize {
        self.val_episodes.unwrap_or(self.episodes_per_epoch / 4)
    }
}
