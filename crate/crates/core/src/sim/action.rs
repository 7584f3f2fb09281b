use std::f64::consts::{E, TAU};

use serde::{Deserialize, Serialize};

use super::Vec2;

/// Holonomic velocity command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// m/s
    pub speed: f64,
    /// radians
    pub heading: f64,
}

impl Action {
    pub fn new(speed: f64, heading: f64) -> Self {
        Action { speed, heading }
    }

    /// Converts a velocity into (speed, heading); a zero velocity keeps `fallback_heading`.
    pub fn from_velocity(v: Vec2, fallback_heading: f64) -> Self {
        let speed = v.length();
        let heading = if speed > 0.0 {
            v.angle().rem_euclid(TAU)
        } else {
            fallback_heading
        };
        Action { speed, heading }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_polar(self.speed, self.heading)
    }
}

pub const NUM_SPEEDS: usize = 5;
pub const NUM_HEADINGS: usize = 16;

/// The discrete 5 speeds × 16 headings action grid.
///
/// Index `i * NUM_HEADINGS + k` is speed `i` (slowest first) and heading `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    speeds: Vec<f64>,
    headings: Vec<f64>,
    actions: Vec<Action>,
}

impl ActionSpace {
    pub fn new(v_pref: f64) -> Self {
        let speeds: Vec<f64> = (1..=NUM_SPEEDS)
            .map(|i| {
                if i == NUM_SPEEDS {
                    v_pref
                } else {
                    v_pref * ((i as f64 / NUM_SPEEDS as f64).exp() - 1.0) / (E - 1.0)
                }
            })
            .collect();
        let headings: Vec<f64> = (0..NUM_HEADINGS)
            .map(|k| TAU * k as f64 / NUM_HEADINGS as f64)
            .collect();
        let actions = speeds
            .iter()
            .flat_map(|&s| headings.iter().map(move |&h| Action::new(s, h)))
            .collect();
        ActionSpace {
            speeds,
            headings,
            actions,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn get(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn headings(&self) -> &[f64] {
        &self.headings
    }

    /// (speed index, heading index) of an action index.
    pub fn grid_position(index: usize) -> (usize, usize) {
        (index / NUM_HEADINGS, index % NUM_HEADINGS)
    }
}
