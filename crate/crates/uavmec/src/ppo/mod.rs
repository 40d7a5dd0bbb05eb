//! Per-UAV actor-critic learner with a hybrid action head, clipped-ratio
//! updates over neighbor-pooled experience, and post-update parameter
//! averaging.

mod buffer;
mod gae;
mod policy;
mod update;

pub use buffer::{HybridAction, ReplayBuffer, Transition};
pub use gae::compute_gae;
pub use policy::{
    greedy_action, move_scale, policy_forward, policy_param_spec, sample_action, value_forward,
    PolicyNodes, MASK_LOGIT,
};
pub use update::{learner_round, ppo_update, UpdateStats};

/// Optimization hyperparameters for the clipped-ratio learner.
#[derive(Debug, Clone, Copy)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda_gae: f64,
    pub clip_epsilon: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub buffer_capacity: usize,
    pub policy_hidden: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda_gae: 0.95,
            clip_epsilon: 0.2,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            epochs: 4,
            minibatch: 64,
            learning_rate: 3e-4,
            grad_clip: 0.5,
            buffer_capacity: 4096,
            policy_hidden: 64,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        use crate::error::Error;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda_gae) {
            return Err(Error::config(format!(
                "lambda_gae {} outside [0, 1]",
                self.lambda_gae
            )));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::config(format!(
                "clip_epsilon {} outside (0, 1)",
                self.clip_epsilon
            )));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.policy_hidden == 0 {
            return Err(Error::config("epochs, minibatch, policy_hidden must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "non-positive learning_rate {}",
                self.learning_rate
            )));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::config(format!("non-positive grad_clip {}", self.grad_clip)));
        }
        Ok(())
    }
}
