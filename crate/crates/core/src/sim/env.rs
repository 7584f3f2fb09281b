use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ClampedNormal, RewardConfig};
use super::{min_separation, Action, HumanState, JointState, RobotState, SimConfig, Vec2};
use crate::error::{Error, Result};
use crate::orca::{compute_orca_velocity, preferred_velocity, OrcaAgent};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// What happened during one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    None,
    /// Closest human surface distance, meters.
    Discomfort {
        d_min: f64,
    },
    Collision,
    ReachedGoal,
    Timeout,
}

impl Event {
    pub fn is_terminal(self) -> bool {
        matches!(self, Event::Collision | Event::ReachedGoal | Event::Timeout)
    }

    pub fn name(self) -> &'static str {
        match self {
            Event::None => "none",
            Event::Discomfort { .. } => "discomfort",
            Event::Collision => "collision",
            Event::ReachedGoal => "reached_goal",
            Event::Timeout => "timeout",
        }
    }
}

/// Reward for a classified step.
pub fn compute_reward(event: Event, reward: &RewardConfig, dt: f64) -> f64 {
    match event {
        Event::ReachedGoal => reward.success_reward,
        Event::Collision => reward.collision_penalty,
        Event::Discomfort { d_min } => {
            (d_min - reward.discomfort_dist) * reward.discomfort_penalty_factor * dt
        }
        Event::None | Event::Timeout => 0.0,
    }
}

/// Classifies a robot motion over one interval against humans moving linearly.
///
/// Collision wins over reaching the goal; a timeout is only reported when
/// neither happened. `timed_out` is false for predicted (planning) steps.
pub fn classify_step(
    robot: &RobotState,
    robot_velocity: Vec2,
    humans: &[HumanState],
    human_velocities: &[Vec2],
    dt: f64,
    reward: &RewardConfig,
    timed_out: bool,
) -> Event {
    let d_min = humans
        .iter()
        .zip(human_velocities)
        .map(|(h, &hv)| {
            min_separation(
                robot.position,
                robot_velocity,
                robot.radius,
                h.position,
                hv,
                h.radius,
                dt,
            )
        })
        .fold(f64::INFINITY, f64::min);
    let end = robot.position + robot_velocity * dt;
    if d_min < 0.0 {
        Event::Collision
    } else if end.distance(robot.goal) < robot.radius {
        Event::ReachedGoal
    } else if timed_out {
        Event::Timeout
    } else if d_min < reward.discomfort_dist {
        Event::Discomfort { d_min }
    } else {
        Event::None
    }
}

/// Σ_k (γ^(Δt·v_pref))^k · r_k
pub fn discounted_return(rewards: &[f64], gamma: f64, v_pref: f64, dt: f64) -> f64 {
    let step_discount = gamma.powf(dt * v_pref);
    rewards
        .iter()
        .rev()
        .fold(0.0, |acc, &r| r + step_discount * acc)
}

/// A simulated human: observable state plus the intent hidden from the robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Human {
    pub state: HumanState,
    pub goal: Vec2,
    pub v_pref: f64,
    pub reached_goal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub robot: RobotState,
    pub humans: Vec<Human>,
}

fn sample_clamped<R: Rng + ?Sized>(d: &ClampedNormal, rng: &mut R) -> f64 {
    if d.std == 0.0 {
        return d.mean.clamp(d.min, d.max);
    }
    let normal = Normal::new(d.mean, d.std).expect("validated std");
    normal.sample(rng).clamp(d.min, d.max)
}

/// Circle-crossing layout: humans start near the circle (perturbed per
/// coordinate) and head for the point opposite their perturbed start; the
/// robot crosses from (0, -R) to (0, R).
pub fn generate_circle_crossing<R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<Scenario> {
    config.validate()?;
    let r = config.circle_radius;
    let robot = RobotState {
        position: Vec2::new(0.0, -r),
        velocity: Vec2::ZERO,
        radius: config.robot_radius,
        goal: Vec2::new(0.0, r),
        v_pref: config.robot_v_pref,
        heading: FRAC_PI_2,
    };
    let noise = Normal::new(0.0, config.humans.position_noise.max(f64::MIN_POSITIVE))
        .expect("validated noise");
    let margin = config.reward.discomfort_dist;
    let mut humans: Vec<Human> = Vec::with_capacity(config.human_num);
    for index in 0..config.human_num {
        let v_pref = sample_clamped(&config.humans.v_pref, rng);
        let radius = sample_clamped(&config.humans.radius, rng);
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let angle = rng.random_range(0.0..TAU);
            let (dx, dy) = if config.humans.position_noise > 0.0 {
                (noise.sample(rng), noise.sample(rng))
            } else {
                (0.0, 0.0)
            };
            let start = Vec2::from_polar(r, angle) + Vec2::new(dx, dy);
            let goal = -start;
            let clear = |pos: Vec2, other_pos: Vec2, other_radius: f64| {
                pos.distance(other_pos) >= radius + other_radius + margin
            };
            let ok = clear(start, robot.position, robot.radius)
                && clear(goal, robot.goal, robot.radius)
                && humans.iter().all(|h| {
                    clear(start, h.state.position, h.state.radius)
                        && clear(goal, h.goal, h.state.radius)
                });
            if ok {
                placed = Some((start, goal));
                break;
            }
        }
        let (start, goal) = placed.ok_or_else(|| {
            Error::Scenario(format!(
                "could not place human {index} without overlap after {MAX_PLACEMENT_ATTEMPTS} attempts"
            ))
        })?;
        humans.push(Human {
            state: HumanState {
                position: start,
                velocity: Vec2::ZERO,
                radius,
            },
            goal,
            v_pref,
            reached_goal: false,
        });
    }
    Ok(Scenario { robot, humans })
}

/// Result of one simulator step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: JointState,
    pub reward: f64,
    pub event: Event,
}

/// Deterministic crowd simulator for one episode.
#[derive(Clone, Debug)]
pub struct CrowdSim {
    config: SimConfig,
    robot: RobotState,
    humans: Vec<Human>,
    steps: usize,
    finished: bool,
}

impl CrowdSim {
    pub fn new<R: Rng + ?Sized>(config: SimConfig, rng: &mut R) -> Result<Self> {
        let scenario = generate_circle_crossing(&config, rng)?;
        Ok(Self::from_scenario(config, scenario))
    }

    pub fn from_scenario(config: SimConfig, scenario: Scenario) -> Self {
        CrowdSim {
            config,
            robot: scenario.robot,
            humans: scenario.humans,
            steps: 0,
            finished: false,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn humans(&self) -> &[Human] {
        &self.humans
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Simulated time, seconds.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.time_step
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn observe(&self) -> JointState {
        JointState {
            robot: self.robot,
            humans: self.humans.iter().map(|h| h.state).collect(),
        }
    }

    /// ORCA velocities of all humans for the current state. Humans that have
    /// arrived keep a preferred velocity toward their own goal (zero once on
    /// it) and still yield to neighbors.
    pub fn human_velocities(&self) -> Vec<Vec2> {
        let dt = self.config.time_step;
        let params = &self.config.orca;
        let robot_agent = OrcaAgent {
            position: self.robot.position,
            velocity: self.robot.velocity,
            radius: self.robot.radius,
        };
        let mut neighbors: Vec<OrcaAgent> = Vec::with_capacity(self.humans.len());
        (0..self.humans.len())
            .map(|i| {
                let h = &self.humans[i];
                neighbors.clear();
                neighbors.extend(
                    self.humans
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, o)| OrcaAgent::from(&o.state)),
                );
                if self.config.robot_visible {
                    neighbors.push(robot_agent);
                }
                let pref = preferred_velocity(h.state.position, h.goal, h.v_pref, dt);
                compute_orca_velocity(
                    &OrcaAgent::from(&h.state),
                    pref,
                    h.v_pref,
                    &neighbors,
                    params,
                    dt,
                )
            })
            .collect()
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.finished {
            return Err(Error::contract("step called on a finished episode"));
        }
        if !(action.speed >= 0.0 && action.speed <= self.robot.v_pref + 1e-9) {
            return Err(Error::contract(format!(
                "action speed {} exceeds v_pref {}",
                action.speed, self.robot.v_pref
            )));
        }
        let dt = self.config.time_step;
        let robot_velocity = action.velocity();
        let human_velocities = self.human_velocities();
        let before: Vec<HumanState> = self.humans.iter().map(|h| h.state).collect();
        let timed_out = self.steps + 1 >= self.config.max_steps();
        let event = classify_step(
            &self.robot,
            robot_velocity,
            &before,
            &human_velocities,
            dt,
            &self.config.reward,
            timed_out,
        );
        let reward = compute_reward(event, &self.config.reward, dt);

        self.robot.position += robot_velocity * dt;
        self.robot.velocity = robot_velocity;
        if action.speed > 0.0 {
            self.robot.heading = action.heading;
        }
        for (h, v) in self.humans.iter_mut().zip(human_velocities) {
            h.state.position += v * dt;
            h.state.velocity = v;
            if !h.reached_goal && h.state.position.distance(h.goal) < h.state.radius {
                h.reached_goal = true;
            }
        }
        self.steps += 1;
        self.finished = event.is_terminal();
        Ok(StepOutcome {
            next_state: self.observe(),
            reward,
            event,
        })
    }
}
