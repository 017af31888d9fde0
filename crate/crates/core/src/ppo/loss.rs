//! Clipped-surrogate PPO loss with analytic gradients.

use crate::error::{Error, Result};
use crate::policy_net::{
    gaussian_entropy, squash_correction, MlpCache, PolicyParams, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::scalar::Scalar;

/// A minibatch gathered from a rollout; row `i` of each slice belongs to
/// sample `i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Minibatch<T> {
    pub obs: Vec<T>,
    pub pre_squash: Vec<T>,
    pub old_log_probs: Vec<T>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

impl<T: Scalar> Minibatch<T> {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.pre_squash.clear();
        self.old_log_probs.clear();
        self.advantages.clear();
        self.returns.clear();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms<T> {
    pub loss: T,
    pub policy_loss: T,
    pub value_loss: T,
    pub entropy: T,
    pub approx_kl: T,
    pub clip_fraction: T,
}

/// Reusable buffers for [`ppo_loss`].
#[derive(Debug, Clone, Default)]
pub struct LossWorkspace<T> {
    actor: MlpCache<T>,
    critic: MlpCache<T>,
    d_mean: Vec<T>,
    scratch: Vec<T>,
}

/// Standardizes to zero mean and unit (population) standard deviation. The
/// divisor is floored at `1e-8`.
pub fn normalize_advantages<T: Scalar>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = T::from_usize_lossy(adv.len());
    let mean = adv.iter().copied().sum::<T>() / n;
    let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
    let std = var.sqrt().max(T::lit(1e-8));
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut PolicyParams<T>, max_norm: T) -> T {
    let norm = grads
        .slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|&g| g * g)
        .sum::<T>()
        .sqrt();
    let coef = max_norm / (norm + T::lit(1e-6));
    if coef < T::one() {
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= coef);
        }
    }
    norm
}

/// `-mean(min(r A, clip(r, 1-eps, 1+eps) A)) + vf_coef mean((V - R)^2)
///  - entropy_coef entropy`, with `r = exp(log_prob - old_log_prob)`.
///
/// When `grads` is given, the gradient of the loss is accumulated into it.
/// Advantages are used as stored; normalize them beforehand if wanted.
pub fn ppo_loss<T: Scalar>(
    policy: &PolicyParams<T>,
    batch: &Minibatch<T>,
    clip_range: T,
    vf_coef: T,
    entropy_coef: T,
    mut grads: Option<&mut PolicyParams<T>>,
    ws: &mut LossWorkspace<T>,
) -> Result<LossTerms<T>> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::DimensionMismatch { what: "minibatch", expected: 1, got: 0 });
    }
    let od = policy.obs_dim();
    let ad = policy.action_dim();
    if batch.obs.len() != b * od {
        return Err(Error::DimensionMismatch { what: "minibatch observations", expected: b * od, got: batch.obs.len() });
    }
    if batch.pre_squash.len() != b * ad {
        return Err(Error::DimensionMismatch { what: "minibatch actions", expected: b * ad, got: batch.pre_squash.len() });
    }
    let inv_b = T::one() / T::from_usize_lossy(b);
    let one = T::one();
    let (lo_clip, hi_clip) = (one - clip_range, one + clip_range);
    let (ls_lo, ls_hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
    let log_std: Vec<T> = policy.clamped_log_std();
    let inv_var: Vec<T> = log_std.iter().map(|&s| (-(s + s)).exp()).collect();
    let ls_active: Vec<bool> = policy.log_std.iter().map(|&s| s > ls_lo && s < ls_hi).collect();
    let half = T::lit(0.5);
    let norm_const: T = log_std.iter().copied().sum::<T>()
        + T::from_usize_lossy(ad) * half * (T::lit(2.0) * T::PI()).ln();

    let mut policy_loss = T::zero();
    let mut value_loss = T::zero();
    let mut kl = T::zero();
    let mut clipped = 0usize;

    for i in 0..b {
        let obs = &batch.obs[i * od..(i + 1) * od];
        let z = &batch.pre_squash[i * ad..(i + 1) * ad];
        policy.actor.forward_cached(obs, &mut ws.actor)?;
        let mean = ws.actor.output();
        let mut quad = T::zero();
        for k in 0..ad {
            let d = z[k] - mean[k];
            quad += d * d * inv_var[k];
        }
        let log_prob = -half * quad - norm_const - squash_correction(z);
        let log_ratio = log_prob - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped_obj = ratio.max(lo_clip).min(hi_clip) * adv;
        policy_loss -= unclipped.min(clipped_obj) * inv_b;
        if (ratio - one).abs() > clip_range {
            clipped += 1;
        }
        kl += (ratio - one) - log_ratio;

        policy.critic.forward_cached(obs, &mut ws.critic)?;
        let value = ws.critic.output()[0];
        let err = value - batch.returns[i];
        value_loss += err * err * inv_b;

        if let Some(g) = grads.as_deref_mut() {
            // unclipped branch is the active minimum
            let active = if adv >= T::zero() { ratio <= hi_clip } else { ratio >= lo_clip };
            if active {
                let d_logp = -adv * ratio * inv_b;
                ws.d_mean.clear();
                for k in 0..ad {
                    let diff = z[k] - mean[k];
                    ws.d_mean.push(d_logp * diff * inv_var[k]);
                    if ls_active[k] {
                        g.log_std[k] += d_logp * (diff * diff * inv_var[k] - one);
                    }
                }
                policy.actor.backward(&ws.actor, &ws.d_mean, &mut g.actor, &mut ws.scratch);
            }
            let d_value = vf_coef * (err + err) * inv_b;
            policy.critic.backward(&ws.critic, &[d_value], &mut g.critic, &mut ws.scratch);
        }
    }

    let entropy = gaussian_entropy(&log_std);
    if let Some(g) = grads {
        if entropy_coef != T::zero() {
            for (gk, &active) in g.log_std.iter_mut().zip(&ls_active) {
                if active {
                    *gk -= entropy_coef;
                }
            }
        }
    }
    let loss = policy_loss + vf_coef * value_loss - entropy_coef * entropy;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite loss (policy {policy_loss}, value {value_loss})"
        )));
    }
    Ok(LossTerms {
        loss,
        policy_loss,
        value_loss,
        entropy,
        approx_kl: kl * inv_b,
        clip_fraction: T::from_usize_lossy(clipped) * inv_b,
    })
}
