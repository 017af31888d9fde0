use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::PolicyParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-5;

/// Bias-corrected Adam moments for one [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: PolicyParams<T>,
    pub v: PolicyParams<T>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &PolicyParams<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: T::lit(ADAM_BETA1),
            beta2: T::lit(ADAM_BETA2),
            eps: T::lit(ADAM_EPS),
        }
    }

    /// Applies one update in place. Non-finite gradients leave `params` and
    /// the moments untouched and return [`Error::Divergence`].
    pub fn step(&mut self, params: &mut PolicyParams<T>, grads: &PolicyParams<T>, lr: T) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient at optimizer step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let step_size = lr / bc1;
        let bc2_sqrt = bc2.sqrt();
        let eps = self.eps;
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}
