//! GlyphEnv: a continuous-control environment whose state is `N` boxes in a
//! square window and whose goal is to drive their total pairwise IoU below a
//! threshold.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_to_window, total_overlap, Rect};
use crate::scalar::Scalar;
use crate::seed::{rng_from_seed, Rng};

/// Reward magnitude at zero overlap.
pub const REWARD_SCALE: f64 = 10.0;

/// Resampling attempts per box before initialization gives up.
pub const MAX_INIT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig<T> {
    pub window_size: T,
    pub num_rectan: usize,
    pub min_area: T,
    pub w_min: T,
    pub h_min: T,
    pub min_overlap: T,
    pub max_steps: usize,
    pub action_scale: T,
    pub seed: u64,
}

impl<T: Scalar> Default for EnvConfig<T> {
    fn default() -> Self {
        EnvConfig {
            window_size: T::lit(128.0),
            num_rectan: 5,
            min_area: T::lit(1500.0),
            w_min: T::lit(10.0),
            h_min: T::lit(10.0),
            min_overlap: T::lit(0.1),
            max_steps: 1000,
            action_scale: T::lit(1.0),
            seed: 0,
        }
    }
}

impl<T: Scalar> EnvConfig<T> {
    /// Checks every field. Errors name the offending config key.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: T| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, "must be finite"))
            }
        };
        finite("window_size", self.window_size)?;
        finite("min_area", self.min_area)?;
        finite("w_min", self.w_min)?;
        finite("h_min", self.h_min)?;
        finite("min_overlap", self.min_overlap)?;
        finite("action_scale", self.action_scale)?;
        let zero = T::zero();
        if self.window_size <= zero {
            return Err(Error::config("window_size", "must be positive"));
        }
        if self.num_rectan == 0 {
            return Err(Error::config("num_rectan", "must be at least 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if self.w_min <= zero || self.w_min >= self.window_size {
            return Err(Error::config("w_min", "must lie in (0, window_size)"));
        }
        if self.h_min <= zero || self.h_min >= self.window_size {
            return Err(Error::config("h_min", "must lie in (0, window_size)"));
        }
        if self.min_overlap <= zero || self.min_overlap >= T::one() {
            return Err(Error::config("min_overlap", "must lie in (0, 1)"));
        }
        if self.action_scale <= zero {
            return Err(Error::config("action_scale", "must be positive"));
        }
        let lower = self.w_min * self.h_min;
        if self.min_area < lower {
            return Err(Error::config(
                "min_area",
                format!("{} is below w_min * h_min = {}", self.min_area, lower),
            ));
        }
        let upper = (self.window_size - self.w_min) * (self.window_size - self.h_min);
        if self.min_area > upper {
            return Err(Error::config(
                "min_area",
                format!(
                    "{} exceeds (window_size - w_min) * (window_size - h_min) = {}",
                    self.min_area, upper
                ),
            ));
        }
        let capacity = self.window_size * self.window_size;
        let needed = self.min_area * T::from_usize_lossy(self.num_rectan);
        if needed > capacity {
            return Err(Error::config(
                "min_area",
                format!(
                    "{} boxes of area {} need {} but the window holds {}",
                    self.num_rectan, self.min_area, needed, capacity
                ),
            ));
        }
        Ok(())
    }

    /// Length of the flattened observation and action vectors.
    pub fn flat_dim(&self) -> usize {
        self.num_rectan * 4
    }

    /// Largest possible total overlap, `N(N-1)/2`.
    pub fn max_overlap(&self) -> T {
        let n = self.num_rectan;
        T::from_usize_lossy(n * n.saturating_sub(1) / 2)
    }
}

/// Piecewise-linear reward for total overlap `o` and threshold `m`.
pub fn reward<T: Scalar>(overlap: T, min_overlap: T) -> T {
    let scale = T::lit(REWARD_SCALE);
    if overlap < min_overlap {
        scale * (T::one() - overlap / min_overlap)
    } else {
        -scale * (overlap - min_overlap) / (T::one() - min_overlap)
    }
}

/// Samples `num_rectan` boxes, each of area `min_area` with both sides above
/// the minimum dimensions and fully inside the window.
pub fn generate_initial_state<T: Scalar>(cfg: &EnvConfig<T>, rng: &mut Rng) -> Result<Vec<Rect<T>>> {
    let w = cfg.window_size;
    let area = cfg.min_area;
    let mut rects = Vec::with_capacity(cfg.num_rectan);
    for i in 0..cfg.num_rectan {
        let mut placed = None;
        for _ in 0..MAX_INIT_ATTEMPTS {
            let x1 = uniform(rng, T::zero(), w - cfg.w_min);
            let y1 = uniform(rng, T::zero(), w - cfg.h_min);
            let lo = cfg.w_min.max(area / (w - y1));
            let hi = (w - x1).min(area / cfg.h_min);
            if lo > hi {
                continue;
            }
            let width = uniform(rng, lo, hi);
            let height = area / width;
            placed = Some(Rect::new(x1, y1, x1 + width, y1 + height));
            break;
        }
        match placed {
            Some(r) => rects.push(r),
            None => {
                return Err(Error::Infeasible(format!(
                    "box {i}: no corner in {MAX_INIT_ATTEMPTS} draws admits width in \
                     [max(w_min, min_area/(window_size-y1)), min(window_size-x1, min_area/h_min)]; \
                     min_area {} is too large for window_size {}",
                    area, w
                )))
            }
        }
    }
    Ok(rects)
}

#[inline]
fn uniform<T: Scalar>(rng: &mut Rng, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::lit(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub state: Vec<Rect<T>>,
    pub reward: T,
    pub overlap: T,
    pub done: bool,
    pub truncated: bool,
    pub steps_elapsed: usize,
}

/// One environment instance. Not shareable across threads while stepping;
/// run independent instances instead.
#[derive(Debug, Clone)]
pub struct GlyphEnv<T> {
    cfg: EnvConfig<T>,
    rng: Rng,
    state: Vec<Rect<T>>,
    steps: usize,
    finished: bool,
}

impl<T: Scalar> GlyphEnv<T> {
    /// Validates the config and draws an initial state from `cfg.seed`.
    pub fn new(cfg: EnvConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from_seed(cfg.seed);
        let state = generate_initial_state(&cfg, &mut rng)?;
        Ok(GlyphEnv {
            cfg,
            rng,
            state,
            steps: 0,
            finished: false,
        })
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.cfg
    }

    pub fn state(&self) -> &[Rect<T>] {
        &self.state
    }

    pub fn steps_elapsed(&self) -> usize {
        self.steps
    }

    /// Replaces the current state. Boxes are clipped and canonicalized.
    pub fn set_state(&mut self, rects: Vec<Rect<T>>) -> Result<()> {
        if rects.len() != self.cfg.num_rectan {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.cfg.num_rectan,
                got: rects.len(),
            });
        }
        self.state = rects
            .iter()
            .map(|r| clip_to_window(&r.canonicalize(), self.cfg.window_size))
            .collect();
        Ok(())
    }

    /// Starts a new episode. Passing a seed reseeds the environment RNG.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<&[Rect<T>]> {
        if let Some(s) = seed {
            self.rng = rng_from_seed(s);
        }
        self.state = generate_initial_state(&self.cfg, &mut self.rng)?;
        self.steps = 0;
        self.finished = false;
        Ok(&self.state)
    }

    pub fn overlap(&self) -> T {
        total_overlap(&self.state)
    }

    /// Coordinates divided by the window size, row-major `(N, 4)`.
    pub fn observation(&self) -> Vec<T> {
        let mut obs = Vec::with_capacity(self.cfg.flat_dim());
        self.write_observation(&mut obs);
        obs
    }

    pub fn write_observation(&self, out: &mut Vec<T>) {
        let inv = T::one() / self.cfg.window_size;
        for r in &self.state {
            out.extend_from_slice(&[r.x1 * inv, r.y1 * inv, r.x2 * inv, r.y2 * inv]);
        }
    }

    /// Applies per-box corner deltas, flattened `(N, 4)`. Components are
    /// clamped to `[-1, 1]` and scaled by `action_scale`.
    pub fn step(&mut self, action: &[T]) -> Result<StepOutcome<T>> {
        if action.len() != self.cfg.flat_dim() {
            return Err(Error::DimensionMismatch {
                what: "action",
                expected: self.cfg.flat_dim(),
                got: action.len(),
            });
        }
        if self.finished {
            return Err(Error::EpisodeOver);
        }
        let one = T::one();
        let scale = self.cfg.action_scale;
        for (rect, delta) in self.state.iter_mut().zip(action.chunks_exact(4)) {
            let d = |k: usize| delta[k].max(-one).min(one) * scale;
            let moved = Rect::new(rect.x1 + d(0), rect.y1 + d(1), rect.x2 + d(2), rect.y2 + d(3));
            let clipped = clip_to_window(&moved, self.cfg.window_size).canonicalize();
            *rect = enforce_min_dims(&self.cfg, clipped);
        }
        self.steps += 1;
        let overlap = total_overlap(&self.state);
        let reward = reward(overlap, self.cfg.min_overlap);
        let done = overlap < self.cfg.min_overlap;
        let truncated = !done && self.steps >= self.cfg.max_steps;
        self.finished = done || truncated;
        Ok(StepOutcome {
            state: self.state.clone(),
            reward,
            overlap,
            done,
            truncated,
            steps_elapsed: self.steps,
        })
    }

}

/// Grows a too-small box toward the far window edge, pulling the near
/// corner back when the far edge is reached.
fn enforce_min_dims<T: Scalar>(cfg: &EnvConfig<T>, mut r: Rect<T>) -> Rect<T> {
    let w = cfg.window_size;
    if r.x2 - r.x1 < cfg.w_min {
        r.x2 = (r.x1 + cfg.w_min).min(w);
        if r.x2 - r.x1 < cfg.w_min {
            r.x1 = r.x2 - cfg.w_min;
        }
    }
    if r.y2 - r.y1 < cfg.h_min {
        r.y2 = (r.y1 + cfg.h_min).min(w);
        if r.y2 - r.y1 < cfg.h_min {
            r.y1 = r.y2 - cfg.h_min;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EnvConfig<f64> {
        EnvConfig::default()
    }

    #[test]
    fn reward_branches() {
        assert_eq!(reward(0.0, 0.1), 10.0);
        assert_eq!(reward(0.3, 0.3), 0.0);
        assert_eq!(reward(0.75, 0.5), -5.0);
        assert!(reward(0.05, 0.1) > 0.0);
    }

    #[test]
    fn initial_state_respects_constraints() {
        let c = cfg();
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let rects = generate_initial_state(&c, &mut rng).unwrap();
            assert_eq!(rects.len(), 5);
            for r in rects {
                assert!((r.area() - 1500.0).abs() <= 1e-6 * 1500.0);
                assert!(r.width() >= 10.0 && r.height() >= 10.0);
                assert!(r.is_inside(128.0) && r.is_ordered());
            }
        }
    }

    #[test]
    fn minimal_area_gives_minimal_boxes() {
        let c = EnvConfig {
            min_area: 100.0,
            ..cfg()
        };
        let mut rng = rng_from_seed(0);
        for r in generate_initial_state(&c, &mut rng).unwrap() {
            assert_eq!(r.width(), 10.0);
            assert_eq!(r.height(), 10.0);
        }
    }

    #[test]
    fn seeded_reset_is_deterministic() {
        let mut a = GlyphEnv::new(EnvConfig { seed: 42, ..cfg() }).unwrap();
        let mut b = GlyphEnv::new(EnvConfig { seed: 42, ..cfg() }).unwrap();
        assert_eq!(a.state(), b.state());
        let s0 = a.reset(Some(0)).unwrap().to_vec();
        assert_eq!(s0, b.reset(Some(0)).unwrap().to_vec());
        let o = a.overlap();
        assert!((0.0..=10.0).contains(&o));
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let err = EnvConfig { min_area: 20000.0, ..cfg() }.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "min_area"));
        let err = EnvConfig { min_overlap: 1.0, ..cfg() }.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "min_overlap"));
        let err = EnvConfig { min_area: 50.0, ..cfg() }.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "min_area"));
        let err = EnvConfig { num_rectan: 8, min_area: 2500.0, ..cfg() }.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "min_area"));
    }

    #[test]
    fn single_box_succeeds_on_first_step() {
        let mut env = GlyphEnv::new(EnvConfig { num_rectan: 1, ..cfg() }).unwrap();
        assert_eq!(env.overlap(), 0.0);
        let out = env.step(&[0.3, -1.0, 0.5, 1.0]).unwrap();
        assert!(out.done && !out.truncated);
        assert_eq!(out.reward, 10.0);
        assert!(matches!(env.step(&[0.0; 4]), Err(Error::EpisodeOver)));
    }

    #[test]
    fn zero_action_keeps_overlapping_state() {
        let mut env = GlyphEnv::new(EnvConfig { num_rectan: 2, ..cfg() }).unwrap();
        let a = Rect::new(10.0, 10.0, 60.0, 40.0);
        let b = Rect::new(30.0, 10.0, 80.0, 40.0);
        env.set_state(vec![a, b]).unwrap();
        let out = env.step(&[0.0; 8]).unwrap();
        assert_eq!(out.state, vec![a, b]);
        // inter 30*30, union 1500+1500-900
        let o = 900.0 / 2100.0;
        assert_eq!(out.overlap, o);
        assert_eq!(out.reward, -10.0 * (o - 0.1) / 0.9);
        assert!(!out.done && !out.truncated);
    }

    #[test]
    fn overlap_at_threshold_is_not_success() {
        // two boxes with IoU exactly 0.5 against m = 0.5
        let mut env = GlyphEnv::new(EnvConfig {
            num_rectan: 2,
            min_overlap: 0.5,
            ..cfg()
        })
        .unwrap();
        // inter 750, union 1500
        env.set_state(vec![Rect::new(0.0, 0.0, 30.0, 50.0), Rect::new(0.0, 0.0, 15.0, 50.0)])
            .unwrap();
        let out = env.step(&[0.0; 8]).unwrap();
        assert_eq!(out.overlap, 0.5);
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn truncates_at_max_steps() {
        let mut env = GlyphEnv::new(EnvConfig { num_rectan: 2, max_steps: 3, ..cfg() }).unwrap();
        let r = Rect::new(10.0, 10.0, 60.0, 40.0);
        env.set_state(vec![r, r]).unwrap();
        for k in 1..=3 {
            let out = env.step(&[0.0; 8]).unwrap();
            assert_eq!(out.steps_elapsed, k);
            assert_eq!(out.truncated, k == 3);
            assert!(!out.done);
        }
    }

    #[test]
    fn wrong_action_shape_is_rejected() {
        let mut env = GlyphEnv::new(cfg()).unwrap();
        assert!(matches!(
            env.step(&[0.0; 4]),
            Err(Error::DimensionMismatch { expected: 20, got: 4, .. })
        ));
    }

    #[test]
    fn inverted_and_squashed_boxes_are_repaired() {
        let mut env = GlyphEnv::new(EnvConfig { num_rectan: 2, ..cfg() }).unwrap();
        env.set_state(vec![
            Rect::new(0.0, 0.0, 10.5, 10.5),
            Rect::new(117.0, 117.0, 128.0, 128.0),
        ])
        .unwrap();
        // first box shrinks below the minimum, second is pushed into the corner
        let out = env.step(&[1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(out.state[0], Rect::new(1.0, 1.0, 11.0, 11.0));
        assert_eq!(out.state[1], Rect::new(118.0, 118.0, 128.0, 128.0));
    }

    proptest! {
        #[test]
        fn steps_preserve_invariants(seed in 0u64..1000, actions in proptest::collection::vec(-3.0..3.0f64, 20 * 30)) {
            let mut env = GlyphEnv::new(EnvConfig { seed, max_steps: 30, ..cfg() }).unwrap();
            let o_max = env.config().max_overlap();
            for a in actions.chunks(20) {
                let out = env.step(a).unwrap();
                for r in &out.state {
                    prop_assert!(r.is_ordered() && r.is_inside(128.0));
                    prop_assert!(r.width() >= 10.0 - 1e-9 && r.height() >= 10.0 - 1e-9);
                }
                prop_assert!(!(out.done && out.truncated));
                prop_assert_eq!(out.reward > 0.0, out.overlap < 0.1);
                prop_assert!(out.reward <= 10.0);
                prop_assert!(out.reward >= -10.0 * (o_max - 0.1) / 0.9);
                if out.done || out.truncated { break; }
            }
        }

        #[test]
        fn reward_is_monotone(a in 0.0..10.0f64, b in 0.0..10.0f64, m in 0.01..0.99f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(reward(lo, m) >= reward(hi, m));
        }
    }
}
