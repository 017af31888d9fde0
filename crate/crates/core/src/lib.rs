//! Reinforcement-learning layout engine for text boxes.
//!
//! [`glyph_env`] defines the box-placement environment, [`policy_net`] and
//! [`ppo`] train a Gaussian actor-critic on it, [`eval_bench`] measures
//! policies and runs ablation sweeps, and [`prompt_layout`] turns a prompt
//! into a keyword-to-box layout exported as JSON or SVG.
//!
//! The numeric stack is generic over [`Scalar`] (`f32`/`f64`); the geometry
//! module also accepts exact rationals. Aliases below pin the common choices.

pub mod csvio;
pub mod error;
pub mod eval_bench;
pub mod geometry;
pub mod glyph_env;
pub mod policy_net;
pub mod ppo;
pub mod prompt_layout;
pub mod run_config;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use geometry::{clip_to_window, intersection_area, iou, total_overlap, Coord, Rect};
pub use glyph_env::{EnvConfig, GlyphEnv, StepOutcome};
pub use policy_net::{Checkpoint, PolicyParams};
pub use ppo::{PpoConfig, Trainer};
pub use scalar::Scalar;

pub type RectF64 = Rect<f64>;
pub type RectF32 = Rect<f32>;
/// Exact rectangle arithmetic over rationals.
pub type RationalRect = Rect<num_rational::Ratio<i64>>;

pub type EnvConfigF64 = EnvConfig<f64>;
pub type EnvConfigF32 = EnvConfig<f32>;
pub type GlyphEnvF64 = GlyphEnv<f64>;
pub type GlyphEnvF32 = GlyphEnv<f32>;
pub type PolicyParamsF64 = PolicyParams<f64>;
pub type PolicyParamsF32 = PolicyParams<f32>;
pub type PpoConfigF64 = PpoConfig<f64>;
pub type PpoConfigF32 = PpoConfig<f32>;
pub type TrainerF64 = Trainer<f64>;
pub type TrainerF32 = Trainer<f32>;
