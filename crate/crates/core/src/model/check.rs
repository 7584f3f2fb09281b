use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GraphBatch, ModelConfig, PredictionNetwork, ValueNetwork};
use crate::error::Result;
use crate::sim::{HumanState, JointState, RobotState, Vec2};
use crate::tensor::gradcheck::{compare_excluding, numeric_gradients_with_kinks, BlockReport};
use crate::tensor::Matrix;

/// Finite-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Denominator floor for relative errors of near-zero gradient entries.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Per-block gradient comparison of both stacks.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub value: Vec<BlockReport>,
    pub prediction: Vec<BlockReport>,
}

impl GradcheckReport {
    pub fn blocks(&self) -> impl Iterator<Item = (&'static str, &BlockReport)> {
        self.value
            .iter()
            .map(|b| ("value", b))
            .chain(self.prediction.iter().map(|b| ("prediction", b)))
    }

    pub fn max_relative_error(&self) -> f64 {
        self.blocks()
            .map(|(_, b)| b.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn entries(&self) -> usize {
        self.blocks().map(|(_, b)| b.entries).sum()
    }

    pub fn skipped(&self) -> usize {
        self.blocks().map(|(_, b)| b.skipped).sum()
    }

    /// Every compared entry within `tolerance`, and kink-straddling entries
    /// (left out of the comparison) under 1% of all entries.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.blocks().all(|(_, b)| b.passed(tolerance)) && self.skipped() * 100 < self.entries()
    }
}

/// A random joint state: agents scattered over an 8 m square, speeds up to 1 m/s.
pub fn random_joint_state<R: Rng + ?Sized>(rng: &mut R, num_humans: usize) -> JointState {
    let mut point = |s: f64| Vec2::new(rng.random_range(-s..s), rng.random_range(-s..s));
    let robot = RobotState {
        position: point(4.0),
        velocity: point(0.7),
        radius: 0.3,
        goal: point(4.0),
        v_pref: 1.0,
        heading: 0.0,
    };
    let humans = (0..num_humans)
        .map(|_| HumanState {
            position: Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)),
            velocity: Vec2::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)),
            radius: rng.random_range(0.2..0.4),
        })
        .collect();
    JointState { robot, humans }
}

/// Compares tape gradients of both stacks' training losses against central
/// differences on `num_states` random states with `num_humans` humans.
///
/// Targets are drawn at realistic magnitudes (returns in [-0.25, 1],
/// displacements within ±0.3 m) so the losses stay O(1).
pub fn gradient_check(
    config: &ModelConfig,
    num_states: usize,
    num_humans: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = ValueNetwork::new(config, &mut rng)?;
    let prediction = PredictionNetwork::new(config, &mut rng)?;
    let states: Vec<JointState> = (0..num_states)
        .map(|_| random_joint_state(&mut rng, num_humans))
        .collect();
    let batch = GraphBatch::new(&states)?;

    let returns: Vec<f64> = (0..num_states)
        .map(|_| rng.random_range(-0.25..1.0))
        .collect();
    let (_, analytic) = value.loss_and_gradients(&batch, &returns)?;
    let mut failure = None;
    let (numeric, kinks) = numeric_gradients_with_kinks(value.store(), GRADCHECK_STEP, |s| {
        value
            .loss_and_pattern(s, &batch, &returns)
            .unwrap_or_else(|e| {
                failure.get_or_insert(e);
                (f64::NAN, Vec::new())
            })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let value_report = compare_excluding(
        value.store(),
        &analytic,
        &numeric,
        &kinks,
        tolerance,
        GRADCHECK_FLOOR,
    );

    let displacements = Matrix::from_fn(num_states * num_humans, 2, |_, _| {
        rng.random_range(-0.3..0.3)
    });
    let mut prediction_report = Vec::new();
    if num_humans > 0 {
        let (_, analytic) = prediction.loss_and_gradients(&batch, &displacements)?;
        let mut failure = None;
        let (numeric, kinks) =
            numeric_gradients_with_kinks(prediction.store(), GRADCHECK_STEP, |s| {
                prediction
                    .loss_and_pattern(s, &batch, &displacements)
                    .unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        (f64::NAN, Vec::new())
                    })
            });
        if let Some(e) = failure {
            return Err(e);
        }
        prediction_report = compare_excluding(
            prediction.store(),
            &analytic,
            &numeric,
            &kinks,
            tolerance,
            GRADCHECK_FLOOR,
        );
    }
    Ok(GradcheckReport {
        value: value_report,
        prediction: prediction_report,
    })
}
