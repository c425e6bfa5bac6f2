//! Multi-agent PPO with GAE over the group tree.

pub mod config;
pub mod encoding;
pub mod gae;
pub mod rollout;
pub mod trainer;
pub mod update;

pub use config::{RewardMode, TrainConfig};
pub use encoding::{embed_agents, latest_window, train_encoder};
pub use gae::{compute_gae, normalize, RunningStat};
pub use rollout::{
    collect_rollout, tuple_dim, ActionSelect, Actor, Episode, EpisodeStats, IdleActor,
    RolloutBuffer,
};
pub use trainer::{EpisodeReport, EpochMetrics, Grouping, Trainer};
pub use update::{clip_grad_norm, minibatch_backward, ppo_update, UpdateStats};
