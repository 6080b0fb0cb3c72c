//! Minimal neural-network and advantage actor-critic engine.

pub mod a2c;
pub mod checkpoint;
pub mod mlp;
pub mod policy;
pub mod returns;

pub use a2c::{
    clip_global_norm, combined_loss, A2CHyper, A2CLearner, ActorCritic, Adam, LossOutput,
    TrajectoryStep, UpdateStats,
};
pub use checkpoint::Checkpoint;
pub use mlp::{Mlp, Trace};
pub use policy::{actor_forward, PolicyOutput};
pub use returns::{advantages, discounted_returns, AdvantageMode};
