//! Flat run configuration shared by every CLI subcommand.
//!
//! Precedence is command-line flag, then config file, then the defaults in
//! [`RunConfig::default`]. File keys and flag names (kebab-cased) are the
//! field names below.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval_bench::AblationProtocol;
use crate::glyph_env::EnvConfig;
use crate::prompt_layout::Sizing;
use crate::ppo::PpoConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // environment
    pub window_size: f64,
    pub num_rectan: usize,
    pub min_area: f64,
    pub w_min: f64,
    pub h_min: f64,
    pub min_overlap: f64,
    pub max_steps: usize,
    pub action_scale: f64,

    // PPO
    pub learning_rate: f64,
    pub rollout_horizon: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub total_timesteps: u64,
    pub num_envs: usize,
    pub checkpoint_every: usize,

    // protocol
    /// Root of all randomness in a run.
    pub seed: u64,
    pub episodes: usize,
    pub deterministic: bool,
    /// Training timesteps per ablation row.
    pub budget: u64,
    pub counts: Vec<usize>,
    pub areas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Episodes timed by `eval` after a warm-up episode.
    pub timing_episodes: usize,
    /// Worker threads; 0 uses every core.
    pub workers: usize,

    // layout generation
    pub sizing: Sizing,
    pub reading_order: bool,
    pub svg_scale: f64,

    // I/O
    pub out_dir: PathBuf,
    /// Policy checkpoint path or a name resolved inside `out_dir`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvConfig::<f64>::default();
        let ppo = PpoConfig::<f64>::default();
        RunConfig {
            window_size: env.window_size,
            num_rectan: env.num_rectan,
            min_area: env.min_area,
            w_min: env.w_min,
            h_min: env.h_min,
            min_overlap: env.min_overlap,
            max_steps: env.max_steps,
            action_scale: env.action_scale,
            learning_rate: ppo.learning_rate,
            rollout_horizon: ppo.rollout_horizon,
            minibatch_size: ppo.minibatch_size,
            epochs_per_update: ppo.epochs_per_update,
            gamma: ppo.gamma,
            gae_lambda: ppo.gae_lambda,
            clip_range: ppo.clip_range,
            entropy_coef: ppo.entropy_coef,
            vf_coef: ppo.vf_coef,
            max_grad_norm: ppo.max_grad_norm,
            normalize_advantages: ppo.normalize_advantages,
            total_timesteps: ppo.total_timesteps,
            num_envs: ppo.num_envs,
            checkpoint_every: ppo.checkpoint_every,
            seed: 0,
            episodes: 200,
            deterministic: true,
            budget: 100_000,
            counts: vec![4, 5, 6, 7],
            areas: vec![1300.0, 1500.0, 1800.0, 2000.0],
            seeds: vec![0, 42, 123, 551, 999],
            timing_episodes: 20,
            workers: 0,
            sizing: Sizing::Keywords,
            reading_order: false,
            svg_scale: 4.0,
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes to TOML")
    }

    /// Overlays the non-null fields of a JSON object onto `self`.
    pub fn merge_json(&self, overrides: serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        if let (Some(dst), serde_json::Value::Object(src)) = (base.as_object_mut(), overrides) {
            for (k, v) in src {
                if !v.is_null() {
                    dst.insert(k, v);
                }
            }
        }
        Ok(serde_json::from_value(base)?)
    }

    pub fn env(&self) -> EnvConfig<f64> {
        EnvConfig {
            window_size: self.window_size,
            num_rectan: self.num_rectan,
            min_area: self.min_area,
            w_min: self.w_min,
            h_min: self.h_min,
            min_overlap: self.min_overlap,
            max_steps: self.max_steps,
            action_scale: self.action_scale,
            seed: self.seed,
        }
    }

    pub fn ppo(&self) -> PpoConfig<f64> {
        PpoConfig {
            learning_rate: self.learning_rate,
            rollout_horizon: self.rollout_horizon,
            minibatch_size: self.minibatch_size,
            epochs_per_update: self.epochs_per_update,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip_range: self.clip_range,
            entropy_coef: self.entropy_coef,
            vf_coef: self.vf_coef,
            max_grad_norm: self.max_grad_norm,
            normalize_advantages: self.normalize_advantages,
            total_timesteps: self.total_timesteps,
            num_envs: self.num_envs,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn protocol(&self) -> AblationProtocol<f64> {
        AblationProtocol {
            ppo: self.ppo(),
            budget: self.budget,
            episodes: self.episodes,
            seed: self.seed,
            deterministic: self.deterministic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env().validate()?;
        self.ppo().validate()?;
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.timing_episodes == 0 {
            return Err(Error::config("timing_episodes", "must be at least 1"));
        }
        if !(self.svg_scale > 0.0 && self.svg_scale.is_finite()) {
            return Err(Error::config("svg_scale", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(
            (c.window_size, c.num_rectan, c.min_area, c.w_min, c.h_min, c.min_overlap, c.max_steps, c.action_scale),
            (128.0, 5, 1500.0, 10.0, 10.0, 0.1, 1000, 1.0)
        );
        assert_eq!(
            (c.learning_rate, c.rollout_horizon, c.minibatch_size, c.epochs_per_update),
            (3e-4, 2048, 64, 10)
        );
        assert_eq!(
            (c.gamma, c.gae_lambda, c.clip_range, c.entropy_coef, c.vf_coef, c.max_grad_norm),
            (0.99, 0.95, 0.2, 0.0, 0.5, 0.5)
        );
        assert!(c.normalize_advantages);
        assert_eq!((c.total_timesteps, c.num_envs, c.checkpoint_every), (200_000, 1, 10));
        assert_eq!((c.seed, c.episodes, c.deterministic, c.budget), (0, 200, true, 100_000));
        assert_eq!(c.counts, vec![4, 5, 6, 7]);
        assert_eq!(c.areas, vec![1300.0, 1500.0, 1800.0, 2000.0]);
        assert_eq!(c.seeds, vec![0, 42, 123, 551, 999]);
        assert_eq!((c.sizing, c.reading_order), (Sizing::Keywords, false));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = RunConfig::from_toml("num_rectan = 7\nseed = 3\n").unwrap();
        assert_eq!((p.num_rectan, p.seed, p.min_area), (7, 3, 1500.0));
        assert!(RunConfig::from_toml("num_rectangles = 7").is_err());
    }

    #[test]
    fn merge_ignores_nulls() {
        let c = RunConfig::default()
            .merge_json(serde_json::json!({"min_area": 2000.0, "seed": null, "sizing": "policy"}))
            .unwrap();
        assert_eq!((c.min_area, c.seed, c.sizing), (2000.0, 0, Sizing::Policy));
    }
}
