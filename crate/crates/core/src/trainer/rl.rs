use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::demo::prediction_step;
use super::{
    collect_demonstrations, imitation_learning, rng_stream, IlEpoch, ReplayMemory, RngStream,
    TrainConfig, Transition,
};
use crate::error::{Error, Result};
use crate::model::{GraphBatch, ModelConfig, ModelParams, ValueNetwork};
use crate::planner::Planner;
use crate::sim::{discounted_return, CrowdSim, SimConfig};
use crate::tensor::{Adam, WeightFile};

const TARGET_NAMESPACE: &str = "value";

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub outcome: String,
    pub steps: usize,
    /// Discounted return from the start state.
    pub discounted_return: f64,
    pub epsilon: f64,
    /// Mean minibatch losses over the episode's updates.
    pub value_loss: f64,
    pub prediction_loss: f64,
}

/// Owns the parameters, optimizers, replay memory and random streams of an
/// RL run. Everything here is serialized in a [`Checkpoint`].
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    sim: SimConfig,
    model: ModelParams,
    target: ValueNetwork,
    value_opt: Adam,
    prediction_opt: Adam,
    memory: ReplayMemory,
    scenario_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    episode: usize,
    log: Vec<EpisodeRecord>,
}

impl Trainer {
    /// Starts RL from imitation-initialized `model`; the replay memory is
    /// seeded with `memory` (usually the demonstrations).
    pub fn new(
        config: TrainConfig,
        sim: SimConfig,
        model: ModelParams,
        memory: ReplayMemory,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        sim.validate()?;
        let mut replay = ReplayMemory::new(config.replay_capacity);
        replay.extend(memory.iter().cloned());
        Ok(Trainer {
            target: model.value.clone(),
            value_opt: Adam::new(model.value.store(), config.learning_rate),
            prediction_opt: Adam::new(model.prediction.store(), config.learning_rate),
            config,
            sim,
            model,
            memory: replay,
            scenario_rng: rng_stream(seed, RngStream::Scenarios),
            explore_rng: rng_stream(seed, RngStream::Exploration),
            batch_rng: rng_stream(seed, RngStream::Batches),
            episode: 0,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn target(&self) -> &ValueNetwork {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    /// RL episodes completed so far.
    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn is_done(&self) -> bool {
        self.episode >= self.config.rl_episodes
    }

    pub fn log(&self) -> &[EpisodeRecord] {
        &self.log
    }

    pub fn into_model(self) -> ModelParams {
        self.model
    }

    /// Plays one ε-greedy episode, updating after every step, then syncs the
    /// target network.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let epsilon = self.config.epsilon_at(self.episode);
        let mut env = CrowdSim::new(self.sim, &mut self.scenario_rng)?;
        let (mut rewards, mut value_losses, mut prediction_losses) = (Vec::new(), 0.0, 0.0);
        let mut updates = 0usize;
        let mut outcome = "none";
        while !env.is_finished() {
            let state = env.observe();
            let (_, action) = {
                let planner = Planner::new(
                    self.config.plan,
                    &self.sim,
                    &self.model.value,
                    &self.model.prediction,
                )?;
                planner.select_action(&state, epsilon, &mut self.explore_rng)?
            };
            let out = env.step(action)?;
            rewards.push(out.reward);
            outcome = out.event.name();
            self.memory.push(Transition {
                state,
                action,
                reward: out.reward,
                next_state: out.next_state,
                terminal: out.event.is_terminal(),
                return_to_go: None,
            });
            for _ in 0..self.config.batches_per_step {
                let (v, p) = self.update()?;
                value_losses += v;
                prediction_losses += p;
                updates += 1;
            }
        }
        self.target = self.model.value.clone();
        let record = EpisodeRecord {
            episode: self.episode,
            outcome: outcome.to_string(),
            steps: rewards.len(),
            discounted_return: discounted_return(
                &rewards,
                self.config.plan.gamma,
                self.sim.robot_v_pref,
                self.sim.time_step,
            ),
            epsilon,
            value_loss: value_losses / updates.max(1) as f64,
            prediction_loss: prediction_losses / updates.max(1) as f64,
        };
        self.episode += 1;
        self.log.push(record.clone());
        Ok(record)
    }

    /// Value targets y = r + γ^(Δt·v_pref)·V̂^d(S') from the target network;
    /// terminal transitions use y = r.
    pub fn value_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let planner = Planner::new(
            self.config.plan,
            &self.sim,
            &self.target,
            &self.model.prediction,
        )?;
        let live: Vec<_> = batch
            .iter()
            .filter(|t| !t.terminal)
            .map(|t| t.next_state.clone())
            .collect();
        let mut futures = planner
            .d_step_values(&live, self.config.plan.depth)?
            .into_iter();
        Ok(batch
            .iter()
            .map(|t| {
                if t.terminal {
                    t.reward
                } else {
                    let future = futures.next().expect("one value per live transition");
                    t.reward + planner.step_discount(&t.state) * future
                }
            })
            .collect())
    }

    /// One Adam step on each stack from a fresh minibatch.
    fn update(&mut self) -> Result<(f64, f64)> {
        let batch: Vec<Transition> = self
            .memory
            .sample(self.config.batch_size, &mut self.batch_rng)
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = self.value_targets(&refs)?;
        let graphs = GraphBatch::new(refs.iter().map(|t| &t.state))?;
        let (value_loss, grads) = self.model.value.loss_and_gradients(&graphs, &targets)?;
        if !(value_loss <= self.config.divergence_threshold) {
            return Err(Error::Diverged(format!(
                "value loss {value_loss} at episode {} exceeds {}",
                self.episode, self.config.divergence_threshold
            )));
        }
        self.value_opt.step(self.model.value.store_mut(), &grads)?;
        let prediction_loss =
            prediction_step(&mut self.model.prediction, &mut self.prediction_opt, &refs)?
                .unwrap_or(0.0);
        Ok((value_loss, prediction_loss))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut target = WeightFile::new(self.model.config.fingerprint());
        target.push_store(TARGET_NAMESPACE, self.target.store());
        Checkpoint {
            train: self.config,
            sim: self.sim,
            model: self.model.config.clone(),
            weights: self.model.to_weight_file(),
            target,
            value_optimizer: self.value_opt.clone(),
            prediction_optimizer: self.prediction_opt.clone(),
            memory: self.memory.clone(),
            scenario_rng: self.scenario_rng.clone(),
            explore_rng: self.explore_rng.clone(),
            batch_rng: self.batch_rng.clone(),
            episode: self.episode,
            log: self.log.clone(),
        }
    }

    pub fn resume(checkpoint: Checkpoint) -> Result<Self> {
        let model = ModelParams::from_weight_file(&checkpoint.model, &checkpoint.weights)?;
        checkpoint
            .target
            .check_header(&checkpoint.model.fingerprint())?;
        let mut target = ValueNetwork::new(&checkpoint.model, &mut ChaCha8Rng::seed_from_u64(0))?;
        checkpoint
            .target
            .fill_store(TARGET_NAMESPACE, target.store_mut())?;
        Ok(Trainer {
            config: checkpoint.train,
            sim: checkpoint.sim,
            model,
            target,
            value_opt: checkpoint.value_optimizer,
            prediction_opt: checkpoint.prediction_optimizer,
            memory: checkpoint.memory,
            scenario_rng: checkpoint.scenario_rng,
            explore_rng: checkpoint.explore_rng,
            batch_rng: checkpoint.batch_rng,
            episode: checkpoint.episode,
            log: checkpoint.log,
        })
    }
}

/// Complete RL state; resuming from it continues bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub weights: WeightFile,
    pub target: WeightFile,
    pub value_optimizer: Adam,
    pub prediction_optimizer: Adam,
    pub memory: ReplayMemory,
    pub scenario_rng: ChaCha8Rng,
    pub explore_rng: ChaCha8Rng,
    pub batch_rng: ChaCha8Rng,
    pub episode: usize,
    pub log: Vec<EpisodeRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub struct TrainOutput {
    pub model: ModelParams,
    pub imitation: Vec<IlEpoch>,
    pub log: Vec<EpisodeRecord>,
}

/// Demonstrations (collected unless given), imitation learning, then RL;
/// `on_episode` sees the trainer after every RL episode (checkpointing,
/// progress).
pub fn train(
    config: &TrainConfig,
    sim: &SimConfig,
    model_config: &ModelConfig,
    seed: u64,
    demonstrations: Option<ReplayMemory>,
    mut on_episode: impl FnMut(&Trainer, &EpisodeRecord) -> Result<()>,
) -> Result<TrainOutput> {
    config.validate()?;
    model_config.validate()?;
    let mut model = ModelParams::new(model_config, &mut rng_stream(seed, RngStream::Init))?;
    let demos = match demonstrations {
        Some(d) => d,
        None => collect_demonstrations(
            sim,
            config.il_episodes,
            config.plan.gamma,
            config.replay_capacity,
            &mut rng_stream(seed, RngStream::Demonstrations),
        )?,
    };
    let imitation = if demos.is_empty() {
        Vec::new()
    } else {
        imitation_learning(
            &mut model,
            &demos,
            config,
            &mut rng_stream(seed, RngStream::Imitation),
        )?
    };
    let mut trainer = Trainer::new(*config, *sim, model, demos, seed)?;
    while !trainer.is_done() {
        let record = trainer.run_episode()?;
        on_episode(&trainer, &record)?;
    }
    let log = trainer.log().to_vec();
    Ok(TrainOutput {
        model: trainer.into_model(),
        imitation,
        log,
    })
}
