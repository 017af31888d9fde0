//! Actor-critic function approximator.
//!
//! The actor maps a normalized observation to the mean of a diagonal
//! Gaussian over pre-squash actions; a state-independent `log_std` vector
//! gives the spread. Actions are `tanh` of the Gaussian draw, and log-densities
//! carry the change-of-variables correction so PPO ratios stay exact. The
//! critic is a separate network with a scalar output.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{Mlp, MlpCache};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::glyph_env::EnvConfig;
use crate::scalar::Scalar;
use crate::seed::Rng;

pub const HIDDEN_WIDTH: usize = 64;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside `log(1 - tanh(z)^2 + eps)` so the correction stays finite.
pub const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    /// Raw log standard deviations; clamped to `[LOG_STD_MIN, LOG_STD_MAX]`
    /// wherever they are used.
    pub log_std: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction<T> {
    /// Squashed action in `(-1, 1)`, flattened `(N, 4)`.
    pub action: Vec<T>,
    /// The Gaussian draw before `tanh`; stored in rollouts.
    pub pre_squash: Vec<T>,
    pub log_prob: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<T> {
    pub log_prob: T,
    pub value: T,
    pub entropy: T,
}

impl<T: Scalar> PolicyParams<T> {
    /// Builds actor `obs -> hidden.. -> action_dim` and critic
    /// `obs -> hidden.. -> 1` with orthogonal init (gain sqrt 2 on hidden
    /// layers, 0.01 on the actor head, 1 on the critic head), zero biases and
    /// `log_std = 0`.
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(action_dim);
        critic_sizes.push(1);
        let sqrt2 = std::f64::consts::SQRT_2;
        let actor = Mlp::orthogonal(&actor_sizes, sqrt2, 0.01, rng);
        let critic = Mlp::orthogonal(&critic_sizes, sqrt2, 1.0, rng);
        PolicyParams {
            actor,
            critic,
            log_std: vec![T::zero(); action_dim],
        }
    }

    /// The 64-64 network sized for `cfg.num_rectan` boxes.
    pub fn for_env(cfg: &EnvConfig<T>, rng: &mut Rng) -> Self {
        let d = cfg.flat_dim();
        Self::new(d, d, &[HIDDEN_WIDTH, HIDDEN_WIDTH], rng)
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
            log_std: vec![T::zero(); self.log_std.len()],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Number of boxes the policy was built for.
    pub fn num_rectan(&self) -> usize {
        self.action_dim() / 4
    }

    pub fn num_params(&self) -> usize {
        self.actor.params().len() + self.critic.params().len() + self.log_std.len()
    }

    pub fn slices(&self) -> [&[T]; 3] {
        [self.actor.params(), self.critic.params(), &self.log_std]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 3] {
        [self.actor.params_mut(), self.critic.params_mut(), &mut self.log_std]
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn clamped_log_std(&self) -> Vec<T> {
        let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
        self.log_std.iter().map(|&s| s.max(lo).min(hi)).collect()
    }

    /// Gaussian mean (pre-squash) and clamped log-std for an observation.
    pub fn forward_actor(&self, obs: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        Ok((self.actor.forward(obs)?, self.clamped_log_std()))
    }

    pub fn value(&self, obs: &[T]) -> Result<T> {
        Ok(self.critic.forward(obs)?[0])
    }

    /// `tanh(mean)`: the action used for deterministic evaluation.
    pub fn deterministic_action(&self, obs: &[T]) -> Result<Vec<T>> {
        Ok(self.actor.forward(obs)?.into_iter().map(T::tanh).collect())
    }

    pub fn act(&self, obs: &[T], rng: &mut Rng) -> Result<SampledAction<T>> {
        let (mean, log_std) = self.forward_actor(obs)?;
        Ok(sample_action(&mean, &log_std, rng))
    }

    /// Log-density of a stored pre-squash action, critic value and Gaussian
    /// entropy under the current parameters.
    pub fn evaluate(&self, obs: &[T], pre_squash: &[T]) -> Result<Evaluation<T>> {
        if pre_squash.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                what: "pre-squash action",
                expected: self.action_dim(),
                got: pre_squash.len(),
            });
        }
        let (mean, log_std) = self.forward_actor(obs)?;
        Ok(Evaluation {
            log_prob: squashed_log_prob(pre_squash, &mean, &log_std),
            value: self.value(obs)?,
            entropy: gaussian_entropy(&log_std),
        })
    }
}

fn half_ln_2pi<T: Scalar>() -> T {
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln()
}

/// `log N(z; mean, diag(exp(2 log_std)))`.
pub fn gaussian_log_prob<T: Scalar>(z: &[T], mean: &[T], log_std: &[T]) -> T {
    let c = half_ln_2pi::<T>();
    let half = T::lit(0.5);
    z.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&z, &m), &s)| {
            let u = (z - m) / s.exp();
            -half * u * u - s - c
        })
        .sum()
}

/// `sum log(1 - tanh(z)^2 + eps)`, subtracted from the Gaussian log-density.
pub fn squash_correction<T: Scalar>(z: &[T]) -> T {
    let eps = T::lit(SQUASH_EPS);
    z.iter()
        .map(|&v| {
            let t = v.tanh();
            (T::one() - t * t + eps).ln()
        })
        .sum()
}

pub fn squashed_log_prob<T: Scalar>(z: &[T], mean: &[T], log_std: &[T]) -> T {
    gaussian_log_prob(z, mean, log_std) - squash_correction(z)
}

/// Entropy of the (unsquashed) diagonal Gaussian.
pub fn gaussian_entropy<T: Scalar>(log_std: &[T]) -> T {
    let c = half_ln_2pi::<T>() + T::lit(0.5);
    log_std.iter().map(|&s| s + c).sum()
}

/// Draws `z = mean + exp(log_std) * noise` with standard normal noise.
pub fn sample_action<T: Scalar>(mean: &[T], log_std: &[T], rng: &mut Rng) -> SampledAction<T> {
    let noise: Vec<T> = (0..mean.len())
        .map(|_| T::lit(StandardNormal.sample(rng)))
        .collect();
    sample_action_with_noise(mean, log_std, &noise)
}

pub fn sample_action_with_noise<T: Scalar>(mean: &[T], log_std: &[T], noise: &[T]) -> SampledAction<T> {
    let pre_squash: Vec<T> = mean
        .iter()
        .zip(log_std)
        .zip(noise)
        .map(|((&m, &s), &e)| m + s.exp() * e)
        .collect();
    let log_prob = squashed_log_prob(&pre_squash, mean, log_std);
    SampledAction {
        action: pre_squash.iter().map(|v| v.tanh()).collect(),
        pre_squash,
        log_prob,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn policy(seed: u64) -> PolicyParams<f64> {
        PolicyParams::new(8, 8, &[6, 5], &mut rng_from_seed(seed))
    }

    #[test]
    fn zero_actor_has_zero_mean() {
        let mut p = policy(0);
        p.actor.params_mut().iter_mut().for_each(|v| *v = 0.0);
        let (mean, _) = p.forward_actor(&[0.3; 8]).unwrap();
        assert_eq!(mean, vec![0.0; 8]);
    }

    #[test]
    fn forward_is_pure() {
        let p = policy(1);
        let obs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        assert_eq!(p.forward_actor(&obs).unwrap(), p.forward_actor(&obs).unwrap());
    }

    #[test]
    fn default_network_size() {
        let p = PolicyParams::<f64>::for_env(&EnvConfig::default(), &mut rng_from_seed(0));
        let actor = 20 * 64 + 64 + 64 * 64 + 64 + 64 * 20 + 20;
        let critic = 20 * 64 + 64 + 64 * 64 + 64 + 64 + 1;
        assert_eq!(p.num_params(), actor + critic + 20);
        assert_eq!(p.num_rectan(), 5);
    }

    #[test]
    fn collapsed_std_gives_tanh_of_mean() {
        let mean = [0.3, -1.2, 2.0];
        let s = sample_action(&mean, &[LOG_STD_MIN; 3], &mut rng_from_seed(4));
        for (a, m) in s.action.iter().zip(mean) {
            assert!((a - m.tanh()).abs() < 1e-7);
        }
    }

    #[test]
    fn density_at_mean() {
        let mean = [0.1, 0.2, -0.3];
        let log_std = [0.5, -0.25, 0.0];
        let s = sample_action_with_noise(&mean, &log_std, &[0.0; 3]);
        let want: f64 = log_std.iter().map(|s| -(s + 0.5 * (2.0 * std::f64::consts::PI).ln())).sum();
        assert!((gaussian_log_prob(&s.pre_squash, &mean, &log_std) - want).abs() < 1e-14);
    }

    #[test]
    fn entropy_closed_form() {
        let e = gaussian_entropy(&[0.0f64; 20]);
        let want = 20.0 * 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((e - want).abs() < 1e-12);
    }

    #[test]
    fn evaluate_reproduces_sampled_log_prob() {
        let p = policy(2);
        let obs = [0.9, 0.1, 0.5, 0.5, 0.2, 0.3, 0.4, 0.45];
        let mut rng = rng_from_seed(9);
        for _ in 0..20 {
            let s = p.act(&obs, &mut rng).unwrap();
            assert!(s.action.iter().all(|a| a.abs() < 1.0));
            let e = p.evaluate(&obs, &s.pre_squash).unwrap();
            assert!((e.log_prob - s.log_prob).abs() < 1e-12);
        }
        assert!(p.evaluate(&obs, &[0.0; 3]).is_err());
    }

    /// Density of a = tanh(z) in one dimension by differentiating the CDF
    /// P(A <= a) = Phi((atanh(a) - mu) / sigma) with central differences.
    #[test]
    fn squashed_density_matches_cdf_derivative() {
        fn phi(x: f64) -> f64 {
            // erf by composite Simpson
            let n = 4000;
            let (a, b) = (0.0, x / std::f64::consts::SQRT_2);
            let h = (b - a) / n as f64;
            let f = |t: f64| (-t * t).exp();
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let erf = 2.0 / std::f64::consts::PI.sqrt() * s * h / 3.0;
            0.5 * (1.0 + erf)
        }
        let (mu, ls) = (0.3f64, -0.4f64);
        let mut rng = rng_from_seed(11);
        for _ in 0..5 {
            let s = sample_action(&[mu], &[ls], &mut rng);
            let a = s.action[0];
            let cdf = |x: f64| phi((x.atanh() - mu) / ls.exp());
            let h = 1e-5;
            let numeric = (cdf(a + h) - cdf(a - h)) / (2.0 * h);
            // exact change of variables has no eps; remove it from the comparison
            let t = s.pre_squash[0].tanh();
            let exact = gaussian_log_prob(&s.pre_squash, &[mu], &[ls]) - (1.0 - t * t).ln();
            assert!((exact.exp() - numeric).abs() < 1e-8, "{} vs {}", exact.exp(), numeric);
            assert!((s.log_prob - exact).abs() < 1e-5);
        }
    }
}
