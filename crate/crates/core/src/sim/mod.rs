//! Circle-crossing crowd simulator with ORCA-driven humans.

mod action;
mod config;
mod env;
mod geometry;
mod log;
mod state;

pub use action::{Action, ActionSpace, NUM_HEADINGS, NUM_SPEEDS};
pub use config::{ClampedNormal, HumanSampling, RewardConfig, SimConfig};
pub use env::{
    classify_step, compute_reward, discounted_return, generate_circle_crossing, CrowdSim, Event,
    Human, Scenario, StepOutcome,
};
pub use geometry::{min_separation, Vec2};
pub use log::{read_episode_log, write_episode_log, StepRecord};
pub use state::{HumanState, JointState, RobotState};
