use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig<T> {
    pub learning_rate: T,
    /// Steps collected per env between updates.
    pub rollout_horizon: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub gamma: T,
    pub gae_lambda: T,
    pub clip_range: T,
    pub entropy_coef: T,
    pub vf_coef: T,
    pub max_grad_norm: T,
    pub normalize_advantages: bool,
    pub total_timesteps: u64,
    pub num_envs: usize,
    /// Write a periodic checkpoint every this many updates; 0 disables them.
    pub checkpoint_every: usize,
}

impl<T: Scalar> Default for PpoConfig<T> {
    fn default() -> Self {
        PpoConfig {
            learning_rate: T::lit(3e-4),
            rollout_horizon: 2048,
            minibatch_size: 64,
            epochs_per_update: 10,
            gamma: T::lit(0.99),
            gae_lambda: T::lit(0.95),
            clip_range: T::lit(0.2),
            entropy_coef: T::zero(),
            vf_coef: T::lit(0.5),
            max_grad_norm: T::lit(0.5),
            normalize_advantages: true,
            total_timesteps: 200_000,
            num_envs: 1,
            checkpoint_every: 10,
        }
    }
}

impl<T: Scalar> PpoConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if !(self.learning_rate > zero && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if self.rollout_horizon == 0 {
            return Err(Error::config("rollout_horizon", "must be at least 1"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("minibatch_size", "must be at least 1"));
        }
        if !self.rollout_horizon.is_multiple_of(self.minibatch_size) {
            return Err(Error::config(
                "minibatch_size",
                format!(
                    "rollout_horizon {} is not divisible by minibatch_size {}",
                    self.rollout_horizon, self.minibatch_size
                ),
            ));
        }
        if self.epochs_per_update == 0 {
            return Err(Error::config("epochs_per_update", "must be at least 1"));
        }
        if !(self.gamma > zero && self.gamma <= T::one()) {
            return Err(Error::config("gamma", "must lie in (0, 1]"));
        }
        if !(self.gae_lambda >= zero && self.gae_lambda <= T::one()) {
            return Err(Error::config("gae_lambda", "must lie in [0, 1]"));
        }
        if !(self.clip_range > zero && self.clip_range.is_finite()) {
            return Err(Error::config("clip_range", "must be positive"));
        }
        if !(self.entropy_coef >= zero && self.entropy_coef.is_finite()) {
            return Err(Error::config("entropy_coef", "must be non-negative"));
        }
        if !(self.vf_coef >= zero && self.vf_coef.is_finite()) {
            return Err(Error::config("vf_coef", "must be non-negative"));
        }
        if !(self.max_grad_norm > zero && self.max_grad_norm.is_finite()) {
            return Err(Error::config("max_grad_norm", "must be positive and finite"));
        }
        if self.total_timesteps == 0 {
            return Err(Error::config("total_timesteps", "must be at least 1"));
        }
        if self.num_envs == 0 {
            return Err(Error::config("num_envs", "must be at least 1"));
        }
        Ok(())
    }
}
