use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orca::OrcaParams;

/// Reward table constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub success_reward: f64,
    pub collision_penalty: f64,
    /// meters
    pub discomfort_dist: f64,
    pub discomfort_penalty_factor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            success_reward: 1.0,
            collision_penalty: -0.25,
            discomfort_dist: 0.2,
            discomfort_penalty_factor: 0.5,
        }
    }
}

/// Sampling distribution for one scalar human attribute: Normal(mean, std) clamped to [min, max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClampedNormal {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanSampling {
    /// m/s
    pub v_pref: ClampedNormal,
    /// meters
    pub radius: ClampedNormal,
    /// Per-coordinate start perturbation std, meters.
    pub position_noise: f64,
}

impl Default for HumanSampling {
    fn default() -> Self {
        HumanSampling {
            v_pref: ClampedNormal {
                mean: 1.0,
                std: 0.1,
                min: 0.5,
                max: 1.5,
            },
            radius: ClampedNormal {
                mean: 0.3,
                std: 0.05,
                min: 0.2,
                max: 0.4,
            },
            position_noise: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub human_num: usize,
    /// meters
    pub circle_radius: f64,
    /// seconds
    pub time_step: f64,
    /// seconds
    pub time_limit: f64,
    /// Whether humans react to the robot.
    pub robot_visible: bool,
    /// meters
    pub robot_radius: f64,
    /// m/s
    pub robot_v_pref: f64,
    pub humans: HumanSampling,
    pub reward: RewardConfig,
    pub orca: OrcaParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            human_num: 5,
            circle_radius: 4.0,
            time_step: 0.25,
            time_limit: 25.0,
            robot_visible: false,
            robot_radius: 0.3,
            robot_v_pref: 1.0,
            humans: HumanSampling::default(),
            reward: RewardConfig::default(),
            orca: OrcaParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("circle_radius", self.circle_radius),
            ("time_step", self.time_step),
            ("time_limit", self.time_limit),
            ("robot_radius", self.robot_radius),
            ("robot_v_pref", self.robot_v_pref),
            ("orca.neighbor_dist", self.orca.neighbor_dist),
            ("orca.time_horizon", self.orca.time_horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, d) in [
            ("humans.v_pref", self.humans.v_pref),
            ("humans.radius", self.humans.radius),
        ] {
            if !(d.min > 0.0 && d.min <= d.max && d.std >= 0.0) {
                return Err(Error::contract(format!(
                    "{name} needs 0 < min <= max and std >= 0"
                )));
            }
        }
        if self.orca.safety_space < 0.0 || self.humans.position_noise < 0.0 {
            return Err(Error::contract("negative safety_space or position_noise"));
        }
        let ratio = self.time_limit / self.time_step;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "time_limit {} is not a multiple of time_step {}",
                self.time_limit, self.time_step
            )));
        }
        Ok(())
    }

    /// Number of steps after which the episode times out.
    pub fn max_steps(&self) -> usize {
        (self.time_limit / self.time_step).round() as usize
    }

    /// Straight-line travel time across the circle at the robot's preferred speed.
    pub fn min_travel_time(&self) -> f64 {
        2.0 * self.circle_radius / self.robot_v_pref
    }
}
