//! Evaluation over seeded test cases: Table-1 style metrics, per-case
//! records, CSV output and trajectory drawings.

mod metrics;
mod svg;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearMotion, ModelParams};
use crate::orca::orca_robot_policy;
use crate::planner::{PlanConfig, Planner, StatePredictor, ValueEstimator};
use crate::sim::{Action, CrowdSim, Event, RobotState, Scenario, SimConfig, StepRecord};
use crate::trainer::{rng_stream, RngStream};

pub use metrics::{
    aggregate, metrics_csv, summarize_seeds, upper_bound_return, Metrics, MetricsSummary,
    ReturnConvention, CSV_COLUMNS,
};
pub use svg::{export_svg, HEATMAP_CELLS};

/// A policy under evaluation; exploration is always off.
#[derive(Clone, Copy, Debug)]
pub enum Policy<'a> {
    Orca,
    /// Learned value and learned human motion.
    Rgl {
        model: &'a ModelParams,
        plan: PlanConfig,
    },
    /// Learned value with constant-velocity human motion.
    RglLinear {
        model: &'a ModelParams,
        plan: PlanConfig,
    },
}

impl Policy<'_> {
    pub fn name(&self) -> String {
        match self {
            Policy::Orca => "ORCA".to_string(),
            Policy::Rgl { plan, .. } => format!("RGL (d={}, w={})", plan.depth, plan.width),
            Policy::RglLinear { plan, .. } => {
                format!("RGL-Linear (d={}, w={})", plan.depth, plan.width)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cases: usize,
    /// Case i uses scenario seed `base_seed + i`.
    pub base_seed: u64,
    pub return_convention: ReturnConvention,
    /// Run cases on the rayon pool; results are identical either way.
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cases: 500,
            base_seed: 0,
            return_convention: ReturnConvention::default(),
            parallel: true,
        }
    }
}

/// Outcome of one test case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case: usize,
    pub seed: u64,
    pub outcome: String,
    pub steps: usize,
    /// seconds
    pub navigation_time: f64,
    pub rewards: Vec<f64>,
    /// Reward sequence of the straight-line, empty-crowd episode of this case.
    pub straight_line_rewards: Vec<f64>,
    #[serde(skip)]
    pub episode: Option<EpisodeTrace>,
}

impl CaseRecord {
    pub fn succeeded(&self) -> bool {
        self.outcome == Event::ReachedGoal.name()
    }
}

/// Everything needed to redraw an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub scenario: Scenario,
    pub steps: Vec<StepRecord>,
    /// Root action values per decision (empty for ORCA).
    pub action_values: Vec<Vec<f64>>,
}

/// Scenario for one test case.
pub fn case_scenario(sim: &SimConfig, seed: u64) -> Result<Scenario> {
    crate::sim::generate_circle_crossing(sim, &mut rng_stream(seed, RngStream::Evaluation))
}

/// Rewards of heading straight to the goal at full speed with no humans.
pub fn straight_line_rewards(sim: &SimConfig, robot: &RobotState) -> Result<Vec<f64>> {
    let mut env = CrowdSim::from_scenario(
        *sim,
        Scenario {
            robot: *robot,
            humans: Vec::new(),
        },
    );
    let mut rewards = Vec::new();
    while !env.is_finished() {
        let r = env.robot();
        let heading = (r.goal - r.position).angle();
        rewards.push(env.step(Action::new(r.v_pref, heading))?.reward);
    }
    Ok(rewards)
}

enum Driver<'a> {
    Orca,
    Planned(Box<dyn FnMut(&crate::sim::JointState) -> Result<(Action, Vec<f64>)> + 'a>),
}

fn planner_driver<'a, V, P>(
    plan: PlanConfig,
    sim: &SimConfig,
    value: V,
    predictor: P,
) -> Result<Driver<'a>>
where
    V: ValueEstimator + 'a,
    P: StatePredictor + 'a,
{
    let planner = Planner::new(plan, sim, value, predictor)?;
    // ε = 0 never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(Driver::Planned(Box::new(move |state| {
        let trace = planner.decide(state, 0.0, &mut rng, false)?;
        Ok((
            planner.action_space().get(trace.chosen),
            trace.action_values,
        ))
    })))
}

/// Runs one test case to termination.
pub fn run_case(
    policy: &Policy<'_>,
    sim: &SimConfig,
    case: usize,
    seed: u64,
    keep_trace: bool,
) -> Result<CaseRecord> {
    let scenario = case_scenario(sim, seed)?;
    let mut driver = match *policy {
        Policy::Orca => Driver::Orca,
        Policy::Rgl { model, plan } => planner_driver(plan, sim, &model.value, &model.prediction)?,
        Policy::RglLinear { model, plan } => planner_driver(plan, sim, &model.value, LinearMotion)?,
    };
    let mut env = CrowdSim::from_scenario(*sim, scenario.clone());
    let mut rewards = Vec::new();
    let mut steps = Vec::new();
    let mut action_values = Vec::new();
    let mut outcome = Event::None;
    while !env.is_finished() {
        let state = env.observe();
        let action = match &mut driver {
            Driver::Orca => orca_robot_policy(&state, &sim.orca, sim.time_step),
            Driver::Planned(decide) => {
                let (action, values) = decide(&state)?;
                if keep_trace {
                    action_values.push(values);
                }
                action
            }
        };
        let out = env.step(action)?;
        rewards.push(out.reward);
        outcome = out.event;
        if keep_trace {
            steps.push(StepRecord {
                step: env.steps(),
                time: env.time(),
                robot: out.next_state.robot,
                humans: out.next_state.humans,
                action,
                reward: out.reward,
                event: out.event,
            });
        }
    }
    Ok(CaseRecord {
        case,
        seed,
        outcome: outcome.name().to_string(),
        steps: rewards.len(),
        navigation_time: env.time(),
        straight_line_rewards: straight_line_rewards(sim, &scenario.robot)?,
        rewards,
        episode: keep_trace.then(|| EpisodeTrace {
            scenario,
            steps,
            action_values,
        }),
    })
}

/// Evaluates `policy` on `config.cases` seeded cases. Results are reduced in
/// case order, so parallel and sequential runs agree bit for bit.
pub fn run_evaluation(
    policy: &Policy<'_>,
    sim: &SimConfig,
    config: &EvalConfig,
    gamma: f64,
) -> Result<(Metrics, Vec<CaseRecord>)> {
    if config.cases == 0 {
        return Err(Error::contract("evaluation needs at least one case"));
    }
    sim.validate()?;
    let one = |i: usize| run_case(policy, sim, i, config.base_seed + i as u64, false);
    let records: Vec<CaseRecord> = if config.parallel {
        (0..config.cases)
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        (0..config.cases).map(one).collect::<Result<_>>()?
    };
    let metrics = aggregate(&records, sim, gamma, config.return_convention)?;
    Ok((metrics, records))
}
