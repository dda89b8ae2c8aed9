//! Gaussian MLP policy and value function trained with PPO and generalized
//! advantage estimation. Gradients are hand-derived for the fixed topology.

mod gaussian;
mod mlp;
mod normalizer;
mod ppo;
mod train;


pub use gaussian::{gaussian_log_prob, DeterministicPolicy, PolicyNet, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{ForwardCache, MlpNet};
pub use normalizer::RunningNorm;
pub use ppo::{
    clip_grad_norm, clipped_surrogate, gae, normalized_advantages, policy_loss_grad, ppo_update,
    value_loss_grad, Adam, PolicyStats, PpoConfig, TrajectoryBatch, UpdateStats,
};
pub use train::{
    curve_to_csv, train_policy, BestPolicy, Checkpoint, IterationStats, Trainer, CHECKPOINT_VERSION,
};
