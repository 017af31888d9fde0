//! Rollout collection and the training loop.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::csvio::{config_comments, CsvTable};
use crate::error::{Error, Result};
use crate::glyph_env::{EnvConfig, GlyphEnv, StepOutcome};
use crate::policy_net::{sample_action, AdamState, Checkpoint, PolicyParams};
use crate::scalar::Scalar;
use crate::seed::{derive_rng, derive_seed, Rng};

use super::buffer::RolloutBuffer;
use super::config::PpoConfig;
use super::loss::{clip_grad_norm, normalize_advantages, ppo_loss, LossTerms, LossWorkspace, Minibatch};

/// Completed episodes kept for the rolling means in the metrics log.
pub const EPISODE_WINDOW: usize = 100;

pub const METRICS_HEADER: [&str; 13] = [
    "timestep",
    "updates",
    "episodes",
    "ep_len_mean",
    "ep_reward_mean",
    "ep_success_rate",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "grad_norm",
    "explained_variance",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord<T> {
    pub ret: T,
    pub len: usize,
    pub final_overlap: T,
    pub succeeded: bool,
}

/// Running per-env returns plus a window of recently finished episodes.
#[derive(Debug, Clone)]
pub struct EpisodeTracker<T> {
    running_return: Vec<T>,
    running_len: Vec<usize>,
    recent: VecDeque<EpisodeRecord<T>>,
    pub completed: u64,
}

impl<T: Scalar> EpisodeTracker<T> {
    pub fn new(num_envs: usize) -> Self {
        EpisodeTracker {
            running_return: vec![T::zero(); num_envs],
            running_len: vec![0; num_envs],
            recent: VecDeque::with_capacity(EPISODE_WINDOW),
            completed: 0,
        }
    }

    pub fn record(&mut self, env: usize, out: &StepOutcome<T>) -> Option<EpisodeRecord<T>> {
        self.running_return[env] += out.reward;
        self.running_len[env] += 1;
        if !(out.done || out.truncated) {
            return None;
        }
        let rec = EpisodeRecord {
            ret: self.running_return[env],
            len: self.running_len[env],
            final_overlap: out.overlap,
            succeeded: out.done,
        };
        self.running_return[env] = T::zero();
        self.running_len[env] = 0;
        if self.recent.len() == EPISODE_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back(rec);
        self.completed += 1;
        Some(rec)
    }

    pub fn recent(&self) -> impl Iterator<Item = &EpisodeRecord<T>> {
        self.recent.iter()
    }

    fn means(&self) -> (T, T, T) {
        if self.recent.is_empty() {
            return (T::nan(), T::nan(), T::nan());
        }
        let n = T::from_usize_lossy(self.recent.len());
        let len = self.recent.iter().map(|r| T::from_usize_lossy(r.len)).sum::<T>() / n;
        let ret = self.recent.iter().map(|r| r.ret).sum::<T>() / n;
        let succ = T::from_usize_lossy(self.recent.iter().filter(|r| r.succeeded).count()) / n;
        (len, ret, succ)
    }
}

/// Steps every env `horizon` times with actions sampled from `policy`.
///
/// Finished episodes are reset in place, so envs carry over between calls.
/// Truncated steps store the critic value of the state they reached as their
/// bootstrap; terminated steps bootstrap from zero.
pub fn collect_rollout<T: Scalar>(
    envs: &mut [GlyphEnv<T>],
    policy: &PolicyParams<T>,
    horizon: usize,
    rng: &mut Rng,
    tracker: &mut EpisodeTracker<T>,
) -> Result<RolloutBuffer<T>> {
    let mut buf = RolloutBuffer::new(horizon, envs.len(), policy.obs_dim(), policy.action_dim());
    let mut obs = Vec::with_capacity(policy.obs_dim());
    for _ in 0..horizon {
        for (e, env) in envs.iter_mut().enumerate() {
            obs.clear();
            env.write_observation(&mut obs);
            let (mean, log_std) = policy.forward_actor(&obs)?;
            let sample = sample_action(&mean, &log_std, rng);
            let value = policy.value(&obs)?;
            let out = env.step(&sample.action)?;
            let bootstrap = if out.truncated {
                policy.value(&env.observation())?
            } else {
                T::zero()
            };
            tracker.record(e, &out);
            buf.push(
                &obs,
                &sample.pre_squash,
                sample.log_prob,
                out.reward,
                value,
                out.done,
                out.truncated,
                bootstrap,
            );
            if out.done || out.truncated {
                env.reset(None)?;
            }
        }
    }
    for (e, env) in envs.iter().enumerate() {
        buf.last_values[e] = policy.value(&env.observation())?;
    }
    Ok(buf)
}

/// One row of the training metrics log, written after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow<T> {
    pub timestep: u64,
    pub updates: usize,
    pub episodes: u64,
    pub ep_len_mean: T,
    pub ep_reward_mean: T,
    pub ep_success_rate: T,
    pub policy_loss: T,
    pub value_loss: T,
    pub entropy: T,
    pub approx_kl: T,
    pub clip_fraction: T,
    pub grad_norm: T,
    pub explained_variance: T,
}

impl<T: Scalar> MetricsRow<T> {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.timestep.to_string(),
            self.updates.to_string(),
            self.episodes.to_string(),
            self.ep_len_mean.to_string(),
            self.ep_reward_mean.to_string(),
            self.ep_success_rate.to_string(),
            self.policy_loss.to_string(),
            self.value_loss.to_string(),
            self.entropy.to_string(),
            self.approx_kl.to_string(),
            self.clip_fraction.to_string(),
            self.grad_norm.to_string(),
            self.explained_variance.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub policy: PolicyParams<T>,
    pub metrics: Vec<MetricsRow<T>>,
    pub timesteps: u64,
    pub final_checkpoint: Option<PathBuf>,
}

/// PPO state for one run. All randomness derives from `seed`.
pub struct Trainer<T> {
    env_cfg: EnvConfig<T>,
    cfg: PpoConfig<T>,
    seed: u64,
    envs: Vec<GlyphEnv<T>>,
    policy: PolicyParams<T>,
    adam: AdamState<T>,
    action_rng: Rng,
    shuffle_rng: Rng,
    tracker: EpisodeTracker<T>,
    timesteps: u64,
    updates: usize,
    ws: LossWorkspace<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(env_cfg: EnvConfig<T>, cfg: PpoConfig<T>, seed: u64) -> Result<Self> {
        env_cfg.validate()?;
        cfg.validate()?;
        let envs = (0..cfg.num_envs)
            .map(|i| {
                GlyphEnv::new(EnvConfig {
                    seed: derive_seed(seed, "env", i as u64),
                    ..env_cfg.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let policy = PolicyParams::for_env(&env_cfg, &mut derive_rng(seed, "policy_init", 0));
        let adam = AdamState::new(&policy);
        Ok(Trainer {
            tracker: EpisodeTracker::new(cfg.num_envs),
            env_cfg,
            envs,
            policy,
            adam,
            action_rng: derive_rng(seed, "actions", 0),
            shuffle_rng: derive_rng(seed, "shuffle", 0),
            cfg,
            seed,
            timesteps: 0,
            updates: 0,
            ws: LossWorkspace::default(),
        })
    }

    pub fn policy(&self) -> &PolicyParams<T> {
        &self.policy
    }

    pub fn timesteps(&self) -> u64 {
        self.timesteps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tracker(&self) -> &EpisodeTracker<T> {
        &self.tracker
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.policy, &self.env_cfg, self.timesteps)
    }

    /// Collects one rollout and runs the minibatch epochs over it. On error
    /// the policy and optimizer are restored to their state before the call.
    pub fn iterate(&mut self) -> Result<MetricsRow<T>> {
        let mut buf = collect_rollout(
            &mut self.envs,
            &self.policy,
            self.cfg.rollout_horizon,
            &mut self.action_rng,
            &mut self.tracker,
        )?;
        self.timesteps += buf.len() as u64;
        buf.finalize(self.cfg.gamma, self.cfg.gae_lambda);
        let snapshot = (self.policy.clone(), self.adam.clone());
        match self.update(&buf) {
            Ok(row) => Ok(row),
            Err(e) => {
                self.policy = snapshot.0;
                self.adam = snapshot.1;
                Err(e)
            }
        }
    }

    fn update(&mut self, buf: &RolloutBuffer<T>) -> Result<MetricsRow<T>> {
        let n = buf.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut mb = Minibatch::default();
        let mut sums = LossTerms::<T>::default();
        let mut grad_norm_sum = T::zero();
        let mut count = 0usize;
        for _ in 0..self.cfg.epochs_per_update {
            idx.shuffle(&mut self.shuffle_rng);
            for chunk in idx.chunks(self.cfg.minibatch_size) {
                mb.clear();
                for &i in chunk {
                    mb.obs.extend_from_slice(buf.obs(i));
                    mb.pre_squash.extend_from_slice(buf.action(i));
                    mb.old_log_probs.push(buf.log_probs[i]);
                    mb.advantages.push(buf.advantages[i]);
                    mb.returns.push(buf.returns[i]);
                }
                if self.cfg.normalize_advantages && mb.len() > 1 {
                    normalize_advantages(&mut mb.advantages);
                }
                let mut grads = self.policy.zeros_like();
                let terms = ppo_loss(
                    &self.policy,
                    &mb,
                    self.cfg.clip_range,
                    self.cfg.vf_coef,
                    self.cfg.entropy_coef,
                    Some(&mut grads),
                    &mut self.ws,
                )?;
                grad_norm_sum += clip_grad_norm(&mut grads, self.cfg.max_grad_norm);
                self.adam.step(&mut self.policy, &grads, self.cfg.learning_rate)?;
                if !self.policy.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite parameters after optimizer step {}",
                        self.adam.t
                    )));
                }
                sums.loss += terms.loss;
                sums.policy_loss += terms.policy_loss;
                sums.value_loss += terms.value_loss;
                sums.entropy += terms.entropy;
                sums.approx_kl += terms.approx_kl;
                sums.clip_fraction += terms.clip_fraction;
                count += 1;
            }
        }
        self.updates += 1;
        let c = T::from_usize_lossy(count.max(1));
        let (ep_len_mean, ep_reward_mean, ep_success_rate) = self.tracker.means();
        Ok(MetricsRow {
            timestep: self.timesteps,
            updates: self.updates,
            episodes: self.tracker.completed,
            ep_len_mean,
            ep_reward_mean,
            ep_success_rate,
            policy_loss: sums.policy_loss / c,
            value_loss: sums.value_loss / c,
            entropy: sums.entropy / c,
            approx_kl: sums.approx_kl / c,
            clip_fraction: sums.clip_fraction / c,
            grad_norm: grad_norm_sum / c,
            explained_variance: explained_variance(&buf.values, &buf.returns),
        })
    }

    /// Trains until `total_timesteps` have been collected. With an output
    /// directory, writes `metrics.csv`, periodic checkpoints under
    /// `checkpoints/` and `final.json`; on divergence the pre-update policy
    /// is saved as `last_good.json` before the error is returned.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<TrainOutcome<T>> {
        let mut log = match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let mut comments = config_comments("env", &self.env_cfg);
                comments.extend(config_comments("ppo", &self.cfg));
                comments.push(format!("run.seed = {}", self.seed));
                Some(CsvTable::create(&dir.join("metrics.csv"), &comments, &METRICS_HEADER)?)
            }
            None => None,
        };
        let mut metrics = Vec::new();
        while self.timesteps < self.cfg.total_timesteps {
            let row = match self.iterate() {
                Ok(row) => row,
                Err(e) => {
                    if let (Some(dir), Error::Divergence(_)) = (out_dir, &e) {
                        self.checkpoint().save(&dir.join("last_good.json"))?;
                    }
                    return Err(e);
                }
            };
            if let Some(log) = log.as_mut() {
                log.row(row.to_record())?;
            }
            if let Some(dir) = out_dir {
                let every = self.cfg.checkpoint_every;
                if every > 0 && self.updates.is_multiple_of(every) {
                    let ck = dir.join("checkpoints");
                    fs::create_dir_all(&ck)?;
                    self.checkpoint()
                        .save(&ck.join(format!("step_{:09}.json", self.timesteps)))?;
                }
            }
            metrics.push(row);
        }
        let final_checkpoint = match out_dir {
            Some(dir) => {
                let p = dir.join("final.json");
                self.checkpoint().save(&p)?;
                Some(p)
            }
            None => None,
        };
        Ok(TrainOutcome {
            policy: self.policy.clone(),
            metrics,
            timesteps: self.timesteps,
            final_checkpoint,
        })
    }
}

fn explained_variance<T: Scalar>(pred: &[T], target: &[T]) -> T {
    let n = T::from_usize_lossy(target.len().max(1));
    let var = |v: &mut dyn Iterator<Item = T>, m: T| v.map(|x| (x - m) * (x - m)).sum::<T>() / n;
    let mt = target.iter().copied().sum::<T>() / n;
    let vt = var(&mut target.iter().copied(), mt);
    let diff: Vec<T> = target.iter().zip(pred).map(|(t, p)| *t - *p).collect();
    let md = diff.iter().copied().sum::<T>() / n;
    let vd = var(&mut diff.iter().copied(), md);
    if vt == T::zero() {
        T::nan()
    } else {
        T::one() - vd / vt
    }
}

/// Trains a fresh policy; see [`Trainer::run`].
pub fn train<T: Scalar>(
    env_cfg: &EnvConfig<T>,
    ppo_cfg: &PpoConfig<T>,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    Trainer::new(env_cfg.clone(), ppo_cfg.clone(), seed)?.run(out_dir)
}
