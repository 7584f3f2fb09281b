use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{group_by_humans, GraphBatch};
use super::graph::{GraphForwardTrace, GraphStack, HeadRows, ModelConfig};
use crate::error::{Error, Result};
use crate::sim::{HumanState, JointState, Vec2};
use crate::tensor::{Gradients, Matrix, ParamStore, Tape, WeightFile};

/// Bounds the size of one tape during inference.
const MAX_GRAPHS_PER_FORWARD: usize = 512;

/// Runs `f` on each same-size chunk of `states` and scatters the per-state
/// results back into input order.
fn per_group<T: Default + Clone>(
    states: &[JointState],
    mut f: impl FnMut(&GraphBatch, &[usize]) -> Result<Vec<T>>,
) -> Result<Vec<T>> {
    let mut out = vec![T::default(); states.len()];
    for group in group_by_humans(states) {
        for chunk in group.chunks(MAX_GRAPHS_PER_FORWARD) {
            let batch = GraphBatch::new(chunk.iter().map(|&i| &states[i]))?;
            let results = f(&batch, chunk)?;
            for (&i, v) in chunk.iter().zip(results) {
                out[i] = v;
            }
        }
    }
    Ok(out)
}

/// f_V: graph stack whose robot row feeds a scalar value head.
#[derive(Clone, Debug)]
pub struct ValueNetwork {
    stack: GraphStack,
}

impl ValueNetwork {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut sizes = config.value_mlp.clone();
        sizes.push(1);
        Ok(ValueNetwork {
            stack: GraphStack::new(config, HeadRows::Robot, &sizes, rng)?,
        })
    }

    pub fn stack(&self) -> &GraphStack {
        &self.stack
    }

    pub fn store(&self) -> &ParamStore {
        self.stack.store()
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        self.stack.store_mut()
    }

    pub fn values(&self, states: &[JointState]) -> Result<Vec<f64>> {
        per_group(states, |b, _| self.batch_values(b))
    }

    pub fn value(&self, state: &JointState) -> Result<f64> {
        Ok(self.values(std::slice::from_ref(state))?[0])
    }

    pub fn batch_values(&self, batch: &GraphBatch) -> Result<Vec<f64>> {
        self.values_with(self.store(), batch)
    }

    /// Values under an alternative parameter set with this network's layout.
    pub fn values_with(&self, store: &ParamStore, batch: &GraphBatch) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = self.stack.forward(&mut tape, store, batch)?;
        Ok(tape.value(vars.head).data().to_vec())
    }

    /// Mean squared error against `targets`, evaluated with `store`.
    pub fn loss_with(
        &self,
        store: &ParamStore,
        batch: &GraphBatch,
        targets: &[f64],
    ) -> Result<f64> {
        Ok(self.loss_and_pattern(store, batch, targets)?.0)
    }

    /// Loss plus the rectifier pattern of the forward.
    pub fn loss_and_pattern(
        &self,
        store: &ParamStore,
        batch: &GraphBatch,
        targets: &[f64],
    ) -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let loss = self.record_loss(&mut tape, store, batch, targets)?;
        Ok((tape.value(loss).data()[0], tape.relu_pattern()))
    }

    pub fn loss_and_gradients(
        &self,
        batch: &GraphBatch,
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        let store = self.store();
        let mut tape = Tape::new();
        let loss = self.record_loss(&mut tape, store, batch, targets)?;
        let grads = tape.backward(loss, store)?;
        Ok((tape.value(loss).data()[0], grads))
    }

    fn record_loss<'p>(
        &self,
        tape: &mut Tape<'p>,
        store: &'p ParamStore,
        batch: &GraphBatch,
        targets: &[f64],
    ) -> Result<crate::tensor::Var> {
        if targets.len() != batch.len() || batch.is_empty() {
            return Err(Error::contract(format!(
                "{} value targets for a batch of {}",
                targets.len(),
                batch.len()
            )));
        }
        let vars = self.stack.forward(tape, store, batch)?;
        let y = tape.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec())?);
        tape.mse(vars.head, y)
    }

    pub fn trace(&self, state: &JointState) -> Result<GraphForwardTrace> {
        self.stack.trace(&GraphBatch::new([state])?, 0)
    }
}

/// f_P's human part: graph stack whose human rows feed a displacement head.
///
/// The head outputs each human's displacement over one step in the
/// robot-centric frame; the world-frame velocity is displacement / Δt.
#[derive(Clone, Debug)]
pub struct PredictionNetwork {
    stack: GraphStack,
}

impl PredictionNetwork {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut sizes = config.motion_mlp.clone();
        sizes.push(2);
        Ok(PredictionNetwork {
            stack: GraphStack::new(config, HeadRows::Humans, &sizes, rng)?,
        })
    }

    pub fn stack(&self) -> &GraphStack {
        &self.stack
    }

    pub fn store(&self) -> &ParamStore {
        self.stack.store()
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        self.stack.store_mut()
    }

    /// Predicted human states one step of `dt` ahead, for every state.
    pub fn predict_humans(&self, states: &[JointState], dt: f64) -> Result<Vec<Vec<HumanState>>> {
        per_group(states, |batch, members| {
            let disp = self.displacements_with(self.store(), batch)?;
            let n = batch.num_humans;
            Ok(members
                .iter()
                .enumerate()
                .map(|(g, &k)| {
                    let frame = &batch.frames[g];
                    states[k]
                        .humans
                        .iter()
                        .enumerate()
                        .map(|(i, h)| {
                            let row = disp.row(g * n + i);
                            let d = frame.vector_to_world(Vec2::new(row[0], row[1]));
                            HumanState {
                                position: h.position + d,
                                velocity: d / dt,
                                radius: h.radius,
                            }
                        })
                        .collect()
                })
                .collect())
        })
    }

    /// Raw canonical-frame displacements, (B·N) × 2.
    pub fn displacements_with(&self, store: &ParamStore, batch: &GraphBatch) -> Result<Matrix> {
        if batch.is_empty() || batch.num_humans == 0 {
            return Ok(Matrix::zeros(0, 2));
        }
        let mut tape = Tape::new();
        let vars = self.stack.forward(&mut tape, store, batch)?;
        Ok(tape.value(vars.head).clone())
    }

    /// Canonical-frame displacement targets from observed next human states.
    pub fn targets(states: &[&JointState], next_humans: &[&[HumanState]]) -> Result<Matrix> {
        let mut data = Vec::new();
        let mut rows = 0;
        for (s, next) in states.iter().zip(next_humans) {
            if s.humans.len() != next.len() {
                return Err(Error::contract("next state has a different human count"));
            }
            let frame = super::Frame::of(s);
            for (h, n) in s.humans.iter().zip(next.iter()) {
                let d = frame.vector_to_local(n.position - h.position);
                data.extend_from_slice(&[d.x, d.y]);
                rows += 1;
            }
        }
        Matrix::from_vec(rows, 2, data)
    }

    pub fn loss_with(
        &self,
        store: &ParamStore,
        batch: &GraphBatch,
        targets: &Matrix,
    ) -> Result<f64> {
        Ok(self.loss_and_pattern(store, batch, targets)?.0)
    }

    /// Loss plus the rectifier pattern of the forward.
    pub fn loss_and_pattern(
        &self,
        store: &ParamStore,
        batch: &GraphBatch,
        targets: &Matrix,
    ) -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let loss = self.record_loss(&mut tape, store, batch, targets)?;
        Ok((tape.value(loss).data()[0], tape.relu_pattern()))
    }

    pub fn loss_and_gradients(
        &self,
        batch: &GraphBatch,
        targets: &Matrix,
    ) -> Result<(f64, Gradients)> {
        let store = self.store();
        let mut tape = Tape::new();
        let loss = self.record_loss(&mut tape, store, batch, targets)?;
        let grads = tape.backward(loss, store)?;
        Ok((tape.value(loss).data()[0], grads))
    }

    fn record_loss<'p>(
        &self,
        tape: &mut Tape<'p>,
        store: &'p ParamStore,
        batch: &GraphBatch,
        targets: &Matrix,
    ) -> Result<crate::tensor::Var> {
        if batch.is_empty() || batch.num_humans == 0 {
            return Err(Error::contract("prediction loss needs at least one human"));
        }
        let vars = self.stack.forward(tape, store, batch)?;
        let y = tape.constant(targets.clone());
        tape.mse(vars.head, y)
    }

    pub fn trace(&self, state: &JointState) -> Result<GraphForwardTrace> {
        self.stack.trace(&GraphBatch::new([state])?, 0)
    }
}

/// Constant-velocity human motion.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LinearMotion;

impl LinearMotion {
    pub fn predict_humans(&self, states: &[JointState], dt: f64) -> Vec<Vec<HumanState>> {
        states
            .iter()
            .map(|s| {
                s.humans
                    .iter()
                    .map(|h| HumanState {
                        position: h.position + h.velocity * dt,
                        ..*h
                    })
                    .collect()
            })
            .collect()
    }
}

/// Both graph stacks. They share no parameters.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub value: ValueNetwork,
    pub prediction: PredictionNetwork,
}

const VALUE_NAMESPACE: &str = "value";
const PREDICTION_NAMESPACE: &str = "prediction";

impl ModelParams {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        Ok(ModelParams {
            config: config.clone(),
            value: ValueNetwork::new(config, rng)?,
            prediction: PredictionNetwork::new(config, rng)?,
        })
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut file = WeightFile::new(self.config.fingerprint());
        file.push_store(VALUE_NAMESPACE, self.value.store());
        file.push_store(PREDICTION_NAMESPACE, self.prediction.store());
        file
    }

    /// Builds a model with `config`'s architecture and fills it from `file`.
    pub fn from_weight_file(config: &ModelConfig, file: &WeightFile) -> Result<Self> {
        file.check_header(&config.fingerprint())?;
        // initial values are overwritten; any seed will do
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = ModelParams::new(config, &mut rng)?;
        file.fill_store(VALUE_NAMESPACE, model.value.store_mut())?;
        file.fill_store(PREDICTION_NAMESPACE, model.prediction.store_mut())?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(config: &ModelConfig, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(config, &WeightFile::load(path)?)
    }
}
