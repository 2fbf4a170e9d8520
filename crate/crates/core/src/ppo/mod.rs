//! Source-weight optimization with a PPO agent.

pub mod check;
pub mod env;
pub mod nn;
pub mod policy;
pub mod train;

pub use env::{softmax, ActionVector, EnvConfig, EnvState, SourceWeightEnv, StepResult};
pub use policy::{advantage, clipped_objective, GaussianPolicy, PolicySample};
pub use train::{
    extract_policy_weights, ppo_train, rollout, Controller, PolicyCheckpoint, PpoConfig, Rollout,
    Trained, TrainingReport,
};
