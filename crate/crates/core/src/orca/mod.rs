//! Optimal reciprocal collision avoidance (no static obstacles).
//!
//! The half-plane construction and the two-stage linear program follow the
//! RVO2 reference library.

mod lp;

use serde::{Deserialize, Serialize};

pub use lp::Line;

use crate::sim::{Action, HumanState, JointState, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrcaParams {
    /// meters
    pub neighbor_dist: f64,
    pub max_neighbors: usize,
    /// seconds
    pub time_horizon: f64,
    /// Added to every agent radius, meters.
    pub safety_space: f64,
}

impl Default for OrcaParams {
    fn default() -> Self {
        OrcaParams {
            neighbor_dist: 10.0,
            max_neighbors: 10,
            time_horizon: 5.0,
            safety_space: 0.01,
        }
    }
}

/// Kinematic state of an agent as seen by ORCA. Radii are un-inflated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrcaAgent {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl From<&HumanState> for OrcaAgent {
    fn from(h: &HumanState) -> Self {
        OrcaAgent {
            position: h.position,
            velocity: h.velocity,
            radius: h.radius,
        }
    }
}

/// Unit vector to the goal scaled by `min(v_pref, distance / dt)`.
pub fn preferred_velocity(position: Vec2, goal: Vec2, v_pref: f64, dt: f64) -> Vec2 {
    let to_goal = goal - position;
    let dist = to_goal.length();
    if dist == 0.0 {
        return Vec2::ZERO;
    }
    to_goal / dist * v_pref.min(dist / dt)
}

/// Half-plane of velocities that avoid `other` for `time_horizon` seconds,
/// taking half of the responsibility.
fn orca_line(agent: &OrcaAgent, other: &OrcaAgent, params: &OrcaParams, dt: f64) -> Line {
    let relative_position = other.position - agent.position;
    let relative_velocity = agent.velocity - other.velocity;
    let dist_sq = relative_position.length_squared();
    let combined_radius = agent.radius + other.radius + 2.0 * params.safety_space;
    let combined_radius_sq = combined_radius * combined_radius;
    let inv_horizon = 1.0 / params.time_horizon;

    let (direction, u) = if dist_sq > combined_radius_sq {
        let w = relative_velocity - relative_position * inv_horizon;
        let w_length_sq = w.length_squared();
        let dot1 = w.dot(relative_position);
        if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_length_sq {
            // project on the cut-off circle
            let w_length = w_length_sq.sqrt();
            let unit_w = w / w_length;
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (combined_radius * inv_horizon - w_length),
            )
        } else {
            // project on the nearer leg
            let leg = (dist_sq - combined_radius_sq).sqrt();
            let (px, py) = (relative_position.x, relative_position.y);
            let direction = if relative_position.det(w) > 0.0 {
                Vec2::new(
                    px * leg - py * combined_radius,
                    px * combined_radius + py * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    px * leg + py * combined_radius,
                    -px * combined_radius + py * leg,
                ) / dist_sq
            };
            let dot2 = relative_velocity.dot(direction);
            (direction, direction * dot2 - relative_velocity)
        }
    } else {
        // already overlapping: resolve within one time step
        let inv_dt = 1.0 / dt;
        let w = relative_velocity - relative_position * inv_dt;
        let w_length = w.length();
        let unit_w = if w_length > 0.0 {
            w / w_length
        } else {
            Vec2::new(1.0, 0.0)
        };
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (combined_radius * inv_dt - w_length),
        )
    };
    Line {
        point: agent.velocity + u * 0.5,
        direction,
    }
}

/// New velocity for `agent`: closest to `pref_velocity` among velocities that
/// satisfy every neighbor's ORCA half-plane and `|v| <= max_speed`.
pub fn compute_orca_velocity(
    agent: &OrcaAgent,
    pref_velocity: Vec2,
    max_speed: f64,
    neighbors: &[OrcaAgent],
    params: &OrcaParams,
    dt: f64,
) -> Vec2 {
    let range_sq = params.neighbor_dist * params.neighbor_dist;
    let mut near: Vec<(f64, usize)> = neighbors
        .iter()
        .enumerate()
        .map(|(i, n)| ((n.position - agent.position).length_squared(), i))
        .filter(|&(d, _)| d < range_sq)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(params.max_neighbors);

    let lines: Vec<Line> = near
        .iter()
        .map(|&(_, i)| orca_line(agent, &neighbors[i], params, dt))
        .collect();
    let v = lp::solve(&lines, max_speed, pref_velocity);
    // the LP can overshoot the disc by rounding only
    let speed = v.length();
    if speed > max_speed {
        v * (max_speed / speed)
    } else {
        v
    }
}

/// The robot driven by ORCA against all observed humans.
pub fn orca_robot_policy(state: &JointState, params: &OrcaParams, dt: f64) -> Action {
    let robot = &state.robot;
    let agent = OrcaAgent {
        position: robot.position,
        velocity: robot.velocity,
        radius: robot.radius,
    };
    let neighbors: Vec<OrcaAgent> = state.humans.iter().map(OrcaAgent::from).collect();
    let pref = preferred_velocity(robot.position, robot.goal, robot.v_pref, dt);
    let v = compute_orca_velocity(&agent, pref, robot.v_pref, &neighbors, params, dt);
    let mut action = Action::from_velocity(v, robot.heading);
    action.speed = action.speed.min(robot.v_pref);
    action
}
