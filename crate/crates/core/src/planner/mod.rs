//! d-step lookahead over predicted states with top-w action clipping.

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearMotion, PredictionNetwork, ValueNetwork};
use crate::sim::{
    classify_step, compute_reward, Action, ActionSpace, Event, HumanState, JointState,
    RewardConfig, RobotState, SimConfig,
};

/// Batched state-value function (f_V).
pub trait ValueEstimator {
    fn values(&self, states: &[JointState]) -> Result<Vec<f64>>;
}

/// Batched one-step human motion model (the human part of f_P).
///
/// Human predictions depend only on the current state, so one call covers
/// every robot action from that state.
pub trait StatePredictor {
    fn predict_humans(&self, states: &[JointState], dt: f64) -> Result<Vec<Vec<HumanState>>>;
}

impl ValueEstimator for ValueNetwork {
    fn values(&self, states: &[JointState]) -> Result<Vec<f64>> {
        ValueNetwork::values(self, states)
    }
}

impl StatePredictor for PredictionNetwork {
    fn predict_humans(&self, states: &[JointState], dt: f64) -> Result<Vec<Vec<HumanState>>> {
        PredictionNetwork::predict_humans(self, states, dt)
    }
}

impl StatePredictor for LinearMotion {
    fn predict_humans(&self, states: &[JointState], dt: f64) -> Result<Vec<Vec<HumanState>>> {
        Ok(LinearMotion::predict_humans(self, states, dt))
    }
}

impl<T: ValueEstimator + ?Sized> ValueEstimator for &T {
    fn values(&self, states: &[JointState]) -> Result<Vec<f64>> {
        (**self).values(states)
    }
}

impl<T: StatePredictor + ?Sized> StatePredictor for &T {
    fn predict_humans(&self, states: &[JointState], dt: f64) -> Result<Vec<Vec<HumanState>>> {
        (**self).predict_humans(states, dt)
    }
}

/// Discount applied inside the recursive backup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerDiscount {
    /// γ^(Δt·v_pref), the same per-step factor as the returns.
    #[default]
    Normalized,
    /// γ as printed in the recursion.
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub depth: usize,
    pub width: usize,
    pub gamma: f64,
    pub inner_discount: InnerDiscount,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            depth: 2,
            width: 2,
            gamma: 0.9,
            inner_discount: InnerDiscount::Normalized,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::contract("planning depth must be at least 1"));
        }
        if self.width < 1 {
            return Err(Error::contract("clip width must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::contract(format!(
                "gamma {} not in (0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Robot state after executing `action` for `dt`.
pub fn propagate_robot(robot: &RobotState, action: Action, dt: f64) -> RobotState {
    let v = action.velocity();
    RobotState {
        position: robot.position + v * dt,
        velocity: v,
        heading: if action.speed > 0.0 {
            action.heading
        } else {
            robot.heading
        },
        ..*robot
    }
}

/// Reward of a predicted step, using the simulator's reward table.
///
/// Each human is assumed to move from its current position with its
/// predicted velocity over the interval. Predicted steps never time out.
pub fn estimate_reward(
    state: &JointState,
    action: Action,
    predicted_next: &JointState,
    dt: f64,
    reward: &RewardConfig,
) -> (f64, Event) {
    let velocities: Vec<_> = predicted_next.humans.iter().map(|n| n.velocity).collect();
    let event = classify_step(
        &state.robot,
        action.velocity(),
        &state.humans,
        &velocities,
        dt,
        reward,
        false,
    );
    (compute_reward(event, reward, dt), event)
}

/// One predicted successor.
#[derive(Clone, Debug)]
struct Child {
    state: JointState,
    reward: f64,
    terminal: bool,
}

/// Expanded search tree, kept for traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub state: JointState,
    pub depth_remaining: usize,
    /// f_V of this state.
    pub value: f64,
    /// V^d of this state.
    pub backed_up: f64,
    pub children: Vec<SearchEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchEdge {
    pub action_index: usize,
    pub reward: f64,
    pub terminal: bool,
    pub node: Option<SearchNode>,
}

/// Root evaluation of one decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    /// R̂ + γ^(Δt·v_pref)·V^d(Ŝ') for every action, by action index.
    pub action_values: Vec<f64>,
    pub chosen: usize,
    pub explored: bool,
    /// Tree under the chosen action, when requested.
    pub tree: Option<SearchNode>,
}

/// Lookahead planner over a value estimator and a state predictor.
pub struct Planner<V, P> {
    config: PlanConfig,
    dt: f64,
    reward: RewardConfig,
    value: V,
    predictor: P,
    actions: ActionSpace,
    prediction_calls: Cell<u64>,
}

impl<V: ValueEstimator, P: StatePredictor> Planner<V, P> {
    pub fn new(config: PlanConfig, sim: &SimConfig, value: V, predictor: P) -> Result<Self> {
        config.validate()?;
        Ok(Planner {
            config,
            dt: sim.time_step,
            reward: sim.reward,
            value,
            predictor,
            actions: ActionSpace::new(sim.robot_v_pref),
            prediction_calls: Cell::new(0),
        })
    }

    pub fn config(&self) -> &PlanConfig {
        &self.config
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn value_estimator(&self) -> &V {
        &self.value
    }

    /// Successor states generated so far (one per expanded state-action pair).
    pub fn prediction_calls(&self) -> u64 {
        self.prediction_calls.get()
    }

    pub fn reset_prediction_calls(&self) {
        self.prediction_calls.set(0);
    }

    fn check_v_pref(&self, state: &JointState) -> Result<()> {
        let top = self.actions.speeds()[self.actions.speeds().len() - 1];
        if (state.robot.v_pref - top).abs() > 1e-12 {
            return Err(Error::contract(format!(
                "planner built for v_pref {top}, state has {}",
                state.robot.v_pref
            )));
        }
        Ok(())
    }

    /// γ^(Δt·v_pref)
    pub fn step_discount(&self, state: &JointState) -> f64 {
        self.config.gamma.powf(self.dt * state.robot.v_pref)
    }

    fn inner_discount(&self, state: &JointState) -> f64 {
        match self.config.inner_discount {
            InnerDiscount::Normalized => self.step_discount(state),
            InnerDiscount::Plain => self.config.gamma,
        }
    }

    /// Predicted successors of every state under every action.
    fn expand(&self, states: &[JointState]) -> Result<Vec<Vec<Child>>> {
        let humans = self.predictor.predict_humans(states, self.dt)?;
        self.prediction_calls
            .set(self.prediction_calls.get() + (states.len() * self.actions.len()) as u64);
        Ok(states
            .iter()
            .zip(humans)
            .map(|(s, next_humans)| {
                self.actions
                    .actions()
                    .iter()
                    .map(|&a| {
                        let next = JointState {
                            robot: propagate_robot(&s.robot, a, self.dt),
                            humans: next_humans.clone(),
                        };
                        let (reward, event) = estimate_reward(s, a, &next, self.dt, &self.reward);
                        Child {
                            state: next,
                            reward,
                            terminal: event.is_terminal(),
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// f_V of the non-terminal children (terminal ones get 0), all in one batch.
    fn child_values(&self, children: &[&Child]) -> Result<Vec<f64>> {
        let live: Vec<JointState> = children
            .iter()
            .filter(|c| !c.terminal)
            .map(|c| c.state.clone())
            .collect();
        let mut values = self.value.values(&live)?.into_iter();
        Ok(children
            .iter()
            .map(|c| {
                if c.terminal {
                    0.0
                } else {
                    values.next().expect("one value per live child")
                }
            })
            .collect())
    }

    /// V^d of one state.
    pub fn d_step_value(&self, state: &JointState, depth: usize) -> Result<f64> {
        Ok(self.d_step_values(std::slice::from_ref(state), depth)?[0])
    }

    /// V^d of many states, evaluated level by level in batches.
    pub fn d_step_values(&self, states: &[JointState], depth: usize) -> Result<Vec<f64>> {
        if depth < 1 {
            return Err(Error::contract("d_step_value requires d >= 1"));
        }
        for s in states {
            self.check_v_pref(s)?;
        }
        let base = self.value.values(states)?;
        self.backup(states, base, depth)
    }

    /// V^d given f_V of `states` already computed.
    fn backup(&self, states: &[JointState], base: Vec<f64>, depth: usize) -> Result<Vec<f64>> {
        if depth == 1 || states.is_empty() {
            return Ok(base);
        }
        let expanded = self.expand(states)?;
        let flat: Vec<&Child> = expanded.iter().flatten().collect();
        let child_values = self.child_values(&flat)?;
        let per_state = self.actions.len();

        // clip to the top-w children by one-step lookahead
        let mut selected: Vec<(usize, usize)> = Vec::new(); // (state, flat child)
        for (si, s) in states.iter().enumerate() {
            let g = self.step_discount(s);
            let offset = si * per_state;
            let scores: Vec<f64> = (0..per_state)
                .map(|a| flat[offset + a].reward + g * child_values[offset + a])
                .collect();
            for a in top_indices(&scores, self.config.width) {
                selected.push((si, offset + a));
            }
        }
        let deeper_states: Vec<JointState> = selected
            .iter()
            .filter(|&&(_, c)| !flat[c].terminal)
            .map(|&(_, c)| flat[c].state.clone())
            .collect();
        let deeper_base: Vec<f64> = selected
            .iter()
            .filter(|&&(_, c)| !flat[c].terminal)
            .map(|&(_, c)| child_values[c])
            .collect();
        let mut deeper = self
            .backup(&deeper_states, deeper_base, depth - 1)?
            .into_iter();

        let d = depth as f64;
        let mut best = vec![f64::NEG_INFINITY; states.len()];
        for &(si, c) in &selected {
            let future = if flat[c].terminal {
                0.0
            } else {
                deeper.next().expect("one backup per live child")
            };
            let q = flat[c].reward + self.inner_discount(&states[si]) * future;
            if q > best[si] {
                best[si] = q;
            }
        }
        Ok(base
            .iter()
            .zip(best)
            .map(|(v, b)| v / d + (d - 1.0) / d * b)
            .collect())
    }

    /// Root objective R̂ + γ^(Δt·v_pref)·V^d(Ŝ'_a) for every action.
    pub fn action_values(&self, state: &JointState) -> Result<Vec<f64>> {
        self.check_v_pref(state)?;
        let expanded = self.expand(std::slice::from_ref(state))?;
        let children: Vec<&Child> = expanded[0].iter().collect();
        let live: Vec<JointState> = children
            .iter()
            .filter(|c| !c.terminal)
            .map(|c| c.state.clone())
            .collect();
        let mut futures = self.d_step_values(&live, self.config.depth)?.into_iter();
        let g = self.step_discount(state);
        Ok(children
            .iter()
            .map(|c| {
                let future = if c.terminal {
                    0.0
                } else {
                    futures.next().expect("one value per live child")
                };
                c.reward + g * future
            })
            .collect())
    }

    /// ε-greedy choice over the full action grid; ties go to the lowest index.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &JointState,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(usize, Action)> {
        let trace = self.decide(state, epsilon, rng, false)?;
        Ok((trace.chosen, self.actions.get(trace.chosen)))
    }

    /// Like [`Planner::select_action`] but returns the root evaluation, and
    /// optionally the search tree under the chosen action.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        state: &JointState,
        epsilon: f64,
        rng: &mut R,
        with_tree: bool,
    ) -> Result<DecisionTrace> {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(DecisionTrace {
                action_values: Vec::new(),
                chosen: rng.random_range(0..self.actions.len()),
                explored: true,
                tree: None,
            });
        }
        let values = self.action_values(state)?;
        let chosen = top_indices(&values, 1)[0];
        let tree = if with_tree {
            let a = self.actions.get(chosen);
            let humans = self
                .predictor
                .predict_humans(std::slice::from_ref(state), self.dt)?
                .remove(0);
            let next = JointState {
                robot: propagate_robot(&state.robot, a, self.dt),
                humans,
            };
            let (_, event) = estimate_reward(state, a, &next, self.dt, &self.reward);
            if event.is_terminal() {
                None
            } else {
                Some(self.search_tree(&next, self.config.depth)?)
            }
        } else {
            None
        };
        Ok(DecisionTrace {
            action_values: values,
            chosen,
            explored: false,
            tree,
        })
    }

    /// Unbatched expansion of the clipped tree below `state`, for inspection.
    pub fn search_tree(&self, state: &JointState, depth: usize) -> Result<SearchNode> {
        if depth < 1 {
            return Err(Error::contract("search depth must be at least 1"));
        }
        let value = self.value.values(std::slice::from_ref(state))?[0];
        if depth == 1 {
            return Ok(SearchNode {
                state: state.clone(),
                depth_remaining: 1,
                value,
                backed_up: value,
                children: Vec::new(),
            });
        }
        let expanded = self.expand(std::slice::from_ref(state))?.remove(0);
        let refs: Vec<&Child> = expanded.iter().collect();
        let child_values = self.child_values(&refs)?;
        let g = self.step_discount(state);
        let scores: Vec<f64> = expanded
            .iter()
            .zip(&child_values)
            .map(|(c, v)| c.reward + g * v)
            .collect();
        let mut children = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for a in top_indices(&scores, self.config.width) {
            let c = &expanded[a];
            let node = if c.terminal {
                None
            } else {
                Some(self.search_tree(&c.state, depth - 1)?)
            };
            let future = node.as_ref().map_or(0.0, |n| n.backed_up);
            best = best.max(c.reward + self.inner_discount(state) * future);
            children.push(SearchEdge {
                action_index: a,
                reward: c.reward,
                terminal: c.terminal,
                node,
            });
        }
        let d = depth as f64;
        Ok(SearchNode {
            state: state.clone(),
            depth_remaining: depth,
            value,
            backed_up: value / d + (d - 1.0) / d * best,
            children,
        })
    }
}

/// Indices of the `k` largest scores, best first; equal scores keep index order.
fn top_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
