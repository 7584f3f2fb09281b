use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ReplayMemory, TrainConfig, Transition};
use crate::error::{Error, Result};
use crate::model::{GraphBatch, LinearMotion, ModelParams, PredictionNetwork};
use crate::orca::orca_robot_policy;
use crate::sim::{CrowdSim, SimConfig};
use crate::tensor::Adam;

/// Runs `episodes` ORCA-driven episodes and stores every step, annotated with
/// its discounted return-to-go.
pub fn collect_demonstrations<R: Rng + ?Sized>(
    sim: &SimConfig,
    episodes: usize,
    gamma: f64,
    capacity: usize,
    rng: &mut R,
) -> Result<ReplayMemory> {
    sim.validate()?;
    let dt = sim.time_step;
    let mut memory = ReplayMemory::new(capacity);
    for _ in 0..episodes {
        let mut env = CrowdSim::new(*sim, rng)?;
        let mut episode = Vec::new();
        while !env.is_finished() {
            let state = env.observe();
            let action = orca_robot_policy(&state, &sim.orca, dt);
            let out = env.step(action)?;
            episode.push(Transition {
                state,
                action,
                reward: out.reward,
                next_state: out.next_state,
                terminal: out.event.is_terminal(),
                return_to_go: None,
            });
        }
        let discount = gamma.powf(dt * sim.robot_v_pref);
        let mut g = 0.0;
        for t in episode.iter_mut().rev() {
            g = t.reward + discount * g;
            t.return_to_go = Some(g);
        }
        memory.extend(episode);
    }
    Ok(memory)
}

/// Mean training losses of one pass over the demonstrations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlEpoch {
    pub epoch: usize,
    pub value_loss: f64,
    pub prediction_loss: f64,
}

/// Regresses f_V on return-to-go and f_P on observed human displacements.
pub fn imitation_learning<R: Rng + ?Sized>(
    model: &mut ModelParams,
    memory: &ReplayMemory,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<IlEpoch>> {
    if memory.is_empty() {
        return Err(Error::contract("imitation learning needs demonstrations"));
    }
    let transitions: Vec<&Transition> = memory.iter().collect();
    let mut value_targets = Vec::with_capacity(transitions.len());
    for t in &transitions {
        value_targets.push(
            t.return_to_go
                .ok_or_else(|| Error::contract("demonstration transition lacks a return-to-go"))?,
        );
    }
    let mut value_opt = Adam::new(model.value.store(), config.il_learning_rate);
    let mut prediction_opt = Adam::new(model.prediction.store(), config.il_learning_rate);
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    let mut history = Vec::with_capacity(config.il_epochs);
    for epoch in 1..=config.il_epochs {
        let progress = if config.il_epochs > 1 {
            (epoch - 1) as f64 / (config.il_epochs - 1) as f64
        } else {
            0.0
        };
        let lr = config.il_learning_rate * (1.0 - (1.0 - config.il_final_lr_fraction) * progress);
        value_opt.learning_rate = lr;
        prediction_opt.learning_rate = lr;
        order.shuffle(rng);
        let (mut value_sum, mut prediction_sum, mut count) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| transitions[i]).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| value_targets[i]).collect();
            let graphs = GraphBatch::new(batch.iter().map(|t| &t.state))?;
            let (loss, grads) = model.value.loss_and_gradients(&graphs, &targets)?;
            value_opt.step(model.value.store_mut(), &grads)?;
            value_sum += loss * chunk.len() as f64;
            if let Some(loss) = prediction_step(&mut model.prediction, &mut prediction_opt, &batch)?
            {
                prediction_sum += loss * chunk.len() as f64;
            }
            count += chunk.len();
        }
        history.push(IlEpoch {
            epoch,
            value_loss: value_sum / count as f64,
            prediction_loss: prediction_sum / count as f64,
        });
    }
    Ok(history)
}

/// One Adam step of f_P on observed human displacements. None when the
/// batch has no humans.
pub(crate) fn prediction_step(
    network: &mut PredictionNetwork,
    optimizer: &mut Adam,
    batch: &[&Transition],
) -> Result<Option<f64>> {
    let graphs = GraphBatch::new(batch.iter().map(|t| &t.state))?;
    if graphs.num_humans == 0 {
        return Ok(None);
    }
    let states: Vec<_> = batch.iter().map(|t| &t.state).collect();
    let next: Vec<_> = batch
        .iter()
        .map(|t| t.next_state.humans.as_slice())
        .collect();
    let targets = PredictionNetwork::targets(&states, &next)?;
    let (loss, grads) = network.loss_and_gradients(&graphs, &targets)?;
    optimizer.step(network.store_mut(), &grads)?;
    Ok(Some(loss))
}

/// Mean Euclidean next-position error per human, for f_P and for linear motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionError {
    pub model: f64,
    pub linear: f64,
    pub samples: usize,
}

pub fn prediction_error<'a>(
    network: &PredictionNetwork,
    transitions: impl IntoIterator<Item = &'a Transition>,
    dt: f64,
) -> Result<PredictionError> {
    let transitions: Vec<&Transition> = transitions.into_iter().collect();
    let states: Vec<_> = transitions.iter().map(|t| t.state.clone()).collect();
    let predicted = network.predict_humans(&states, dt)?;
    let linear = LinearMotion.predict_humans(&states, dt);
    let (mut model_sum, mut linear_sum, mut samples) = (0.0, 0.0, 0);
    for ((t, p), l) in transitions.iter().zip(&predicted).zip(&linear) {
        for ((truth, p), l) in t.next_state.humans.iter().zip(p).zip(l) {
            model_sum += truth.position.distance(p.position);
            linear_sum += truth.position.distance(l.position);
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(Error::contract("no human transitions to score"));
    }
    Ok(PredictionError {
        model: model_sum / samples as f64,
        linear: linear_sum / samples as f64,
        samples,
    })
}
