use serde::{Deserialize, Serialize};

use super::Vec2;

/// Full robot state: observable kinematics plus the private goal and speed limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub goal: Vec2,
    pub v_pref: f64,
    /// Radians; direction of the last commanded motion.
    pub heading: f64,
}

impl RobotState {
    pub fn distance_to_goal(&self) -> f64 {
        self.position.distance(self.goal)
    }
}

/// What the robot can observe about a human.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Robot state plus the observed humans; the network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub robot: RobotState,
    pub humans: Vec<HumanState>,
}

impl JointState {
    pub fn num_humans(&self) -> usize {
        self.humans.len()
    }

    /// Rigid transform of every coordinate: rotate by `angle` about the origin, then translate.
    pub fn transformed(&self, angle: f64, offset: Vec2) -> JointState {
        let r = &self.robot;
        JointState {
            robot: RobotState {
                position: r.position.rotated(angle) + offset,
                velocity: r.velocity.rotated(angle),
                goal: r.goal.rotated(angle) + offset,
                heading: r.heading + angle,
                ..*r
            },
            humans: self
                .humans
                .iter()
                .map(|h| HumanState {
                    position: h.position.rotated(angle) + offset,
                    velocity: h.velocity.rotated(angle),
                    radius: h.radius,
                })
                .collect(),
        }
    }
}
