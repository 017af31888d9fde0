//! Policy checkpoint document.
//!
//! JSON with a format tag and version, an echo of the environment config, the
//! layer widths of both networks and their flat parameter arrays. Values are
//! stored as `f64` and written with shortest round-trip formatting, so
//! `f64` and `f32` policies reload bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph_env::EnvConfig;
use crate::scalar::Scalar;

use super::{Mlp, PolicyParams};

pub const CHECKPOINT_FORMAT: &str = "glyph-layout-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Training timesteps consumed when the checkpoint was written.
    pub timesteps: u64,
    pub env: EnvConfig<f64>,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub log_std: Vec<f64>,
}

fn widen<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn narrow<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn widen_env<T: Scalar>(c: &EnvConfig<T>) -> EnvConfig<f64> {
    EnvConfig {
        window_size: c.window_size.to_f64_lossy(),
        num_rectan: c.num_rectan,
        min_area: c.min_area.to_f64_lossy(),
        w_min: c.w_min.to_f64_lossy(),
        h_min: c.h_min.to_f64_lossy(),
        min_overlap: c.min_overlap.to_f64_lossy(),
        max_steps: c.max_steps,
        action_scale: c.action_scale.to_f64_lossy(),
        seed: c.seed,
    }
}

impl Checkpoint {
    pub fn new<T: Scalar>(params: &PolicyParams<T>, env: &EnvConfig<T>, timesteps: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            timesteps,
            env: widen_env(env),
            actor_sizes: params.actor.sizes().to_vec(),
            critic_sizes: params.critic.sizes().to_vec(),
            actor: widen(params.actor.params()),
            critic: widen(params.critic.params()),
            log_std: widen(&params.log_std),
        }
    }

    pub fn params<T: Scalar>(&self) -> Result<PolicyParams<T>> {
        let actor = Mlp::from_params(&self.actor_sizes, narrow(&self.actor))?;
        let critic = Mlp::from_params(&self.critic_sizes, narrow(&self.critic))?;
        if self.log_std.len() != actor.output_dim()
            || critic.output_dim() != 1
            || critic.input_dim() != actor.input_dim()
        {
            return Err(Error::Checkpoint("inconsistent layer dimensions".into()));
        }
        Ok(PolicyParams {
            actor,
            critic,
            log_std: narrow(&self.log_std),
        })
    }

    pub fn env_config<T: Scalar>(&self) -> EnvConfig<T> {
        let e = &self.env;
        EnvConfig {
            window_size: T::lit(e.window_size),
            num_rectan: e.num_rectan,
            min_area: T::lit(e.min_area),
            w_min: T::lit(e.w_min),
            h_min: T::lit(e.h_min),
            min_overlap: T::lit(e.min_overlap),
            max_steps: e.max_steps,
            action_scale: T::lit(e.action_scale),
            seed: e.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<usize> {
        let s = self.to_json()?;
        std::fs::write(path, &s)?;
        Ok(s.len())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
