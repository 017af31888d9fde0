//! Fixed-horizon transition storage and generalized advantage estimation.

use crate::scalar::Scalar;

/// Transitions from `num_envs` environments over `horizon` steps. Row
/// `t * num_envs + e` holds step `t` of env `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer<T> {
    pub horizon: usize,
    pub num_envs: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<T>,
    pub pre_squash: Vec<T>,
    pub log_probs: Vec<T>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    /// Episode reached its success condition at this step.
    pub terminated: Vec<bool>,
    /// Episode hit `max_steps` at this step.
    pub truncated: Vec<bool>,
    /// Critic value of the state reached at a truncated step.
    pub bootstrap_values: Vec<T>,
    /// Critic value of each env's state after the final stored step.
    pub last_values: Vec<T>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
    finalized: bool,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn new(horizon: usize, num_envs: usize, obs_dim: usize, action_dim: usize) -> Self {
        let n = horizon * num_envs;
        RolloutBuffer {
            horizon,
            num_envs,
            obs_dim,
            action_dim,
            observations: Vec::with_capacity(n * obs_dim),
            pre_squash: Vec::with_capacity(n * action_dim),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            terminated: Vec::with_capacity(n),
            truncated: Vec::with_capacity(n),
            bootstrap_values: Vec::with_capacity(n),
            last_values: vec![T::zero(); num_envs],
            advantages: Vec::new(),
            returns: Vec::new(),
            finalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.horizon * self.num_envs
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: &[T],
        pre_squash: &[T],
        log_prob: T,
        reward: T,
        value: T,
        terminated: bool,
        truncated: bool,
        bootstrap_value: T,
    ) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(pre_squash.len(), self.action_dim);
        self.observations.extend_from_slice(obs);
        self.pre_squash.extend_from_slice(pre_squash);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.terminated.push(terminated);
        self.truncated.push(truncated);
        self.bootstrap_values.push(bootstrap_value);
        self.finalized = false;
    }

    pub fn obs(&self, i: usize) -> &[T] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[T] {
        &self.pre_squash[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// Computes advantages and returns per env column with [`compute_gae`].
    pub fn finalize(&mut self, gamma: T, lambda: T) {
        assert!(self.is_full(), "finalize on an incomplete rollout");
        let n = self.len();
        self.advantages = vec![T::zero(); n];
        self.returns = vec![T::zero(); n];
        let ne = self.num_envs;
        for e in 0..ne {
            let col = |v: &[T]| v.iter().skip(e).step_by(ne).copied().collect::<Vec<T>>();
            let colb = |v: &[bool]| v.iter().skip(e).step_by(ne).copied().collect::<Vec<bool>>();
            let (adv, ret) = compute_gae(
                &col(&self.rewards),
                &col(&self.values),
                &colb(&self.terminated),
                &colb(&self.truncated),
                &col(&self.bootstrap_values),
                self.last_values[e],
                gamma,
                lambda,
            );
            for (t, (a, r)) in adv.into_iter().zip(ret).enumerate() {
                self.advantages[t * ne + e] = a;
                self.returns[t * ne + e] = r;
            }
        }
        self.finalized = true;
    }
}

/// GAE over one env's trajectory segment, computed backwards:
///
/// ```text
/// next_t  = 0                     if terminated[t]
///         = bootstrap[t]          if truncated[t]
///         = values[t + 1]         otherwise (last_value at the end)
/// delta_t = r_t + gamma * next_t - values[t]
/// A_t     = delta_t + gamma * lambda * A_{t+1}   (A_{t+1} = 0 across episode ends)
/// ```
///
/// Returns `(advantages, advantages + values)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_gae<T: Scalar>(
    rewards: &[T],
    values: &[T],
    terminated: &[bool],
    truncated: &[bool],
    bootstrap: &[T],
    last_value: T,
    gamma: T,
    lambda: T,
) -> (Vec<T>, Vec<T>) {
    let n = rewards.len();
    let mut adv = vec![T::zero(); n];
    let mut carry = T::zero();
    for t in (0..n).rev() {
        let next_value = if terminated[t] {
            T::zero()
        } else if truncated[t] {
            bootstrap[t]
        } else if t + 1 < n {
            values[t + 1]
        } else {
            last_value
        };
        if terminated[t] || truncated[t] {
            carry = T::zero();
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        carry = delta + gamma * lambda * carry;
        adv[t] = carry;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| *a + *v).collect();
    (adv, ret)
}
