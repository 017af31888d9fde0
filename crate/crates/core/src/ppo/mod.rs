//! Proximal policy optimization over [`GlyphEnv`](crate::glyph_env::GlyphEnv).

mod buffer;
mod config;
mod loss;
mod trainer;

pub use buffer::{compute_gae, RolloutBuffer};
pub use config::PpoConfig;
pub use loss::{clip_grad_norm, normalize_advantages, ppo_loss, LossTerms, LossWorkspace, Minibatch};
pub use trainer::{
    collect_rollout, train, EpisodeRecord, EpisodeTracker, MetricsRow, TrainOutcome, Trainer,
    METRICS_HEADER,
};
