//! Imitation learning from ORCA demonstrations, then value RL with a target
//! network alongside supervised human-motion learning.

mod demo;
mod replay;
mod rl;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PlanConfig;

pub use demo::{
    collect_demonstrations, imitation_learning, prediction_error, IlEpoch, PredictionError,
};
pub use replay::{ReplayMemory, Transition, DEFAULT_REPLAY_CAPACITY};
pub use rl::{train, Checkpoint, EpisodeRecord, TrainOutput, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub il_episodes: usize,
    pub il_epochs: usize,
    pub il_learning_rate: f64,
    /// Imitation learning rate at the last epoch, as a fraction of the first;
    /// annealed linearly in between.
    pub il_final_lr_fraction: f64,
    pub rl_episodes: usize,
    pub batch_size: usize,
    /// Minibatch updates per environment step.
    pub batches_per_step: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub replay_capacity: usize,
    /// Planning during training; `plan.gamma` is the discount for every target.
    pub plan: PlanConfig,
    /// Training aborts once a minibatch value loss exceeds this.
    pub divergence_threshold: f64,
    /// Episodes between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            il_episodes: 2000,
            il_epochs: 50,
            il_learning_rate: 0.001,
            il_final_lr_fraction: 0.1,
            rl_episodes: 10_000,
            batch_size: 100,
            batches_per_step: 1,
            learning_rate: 0.001,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_episodes: 5000,
            replay_capacity: DEFAULT_REPLAY_CAPACITY,
            plan: PlanConfig::default(),
            divergence_threshold: 1e6,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if self.batch_size == 0 || self.batches_per_step == 0 || self.replay_capacity == 0 {
            return Err(Error::contract(
                "batch_size, batches_per_step and replay_capacity must be positive",
            ));
        }
        for (name, lr) in [
            ("learning_rate", self.learning_rate),
            ("il_learning_rate", self.il_learning_rate),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::contract(format!(
                    "{name} must be positive, got {lr}"
                )));
            }
        }
        if !(self.il_final_lr_fraction > 0.0 && self.il_final_lr_fraction <= 1.0) {
            return Err(Error::contract("il_final_lr_fraction must lie in (0, 1]"));
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !eps_ok(self.epsilon_start) || !eps_ok(self.epsilon_end) {
            return Err(Error::contract("epsilon bounds must lie in [0, 1]"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::contract("divergence_threshold must be positive"));
        }
        Ok(())
    }

    /// Exploration rate for a 0-based RL episode index.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let frac = if self.epsilon_decay_episodes == 0 {
            1.0
        } else {
            (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0)
        };
        self.epsilon_start - (self.epsilon_start - self.epsilon_end) * frac
    }
}

/// 0.5 − 0.4·min(episode / 5000, 1)
pub fn epsilon_at(episode: usize) -> f64 {
    TrainConfig::default().epsilon_at(episode)
}

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    Demonstrations = 1,
    Imitation = 2,
    Scenarios = 3,
    Exploration = 4,
    Batches = 5,
    Evaluation = 6,
}

pub fn rng_stream(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
