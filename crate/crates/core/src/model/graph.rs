use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{GraphBatch, HUMAN_FEATURES, ROBOT_FEATURES};
use crate::error::{Error, Result};
use crate::tensor::{Activation, Matrix, ParamId, ParamStore, Tape, Var};

/// Layer sizes and switches shared by the value and prediction stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub robot_mlp: Vec<usize>,
    pub human_mlp: Vec<usize>,
    pub gcn_layers: usize,
    pub value_mlp: Vec<usize>,
    pub motion_mlp: Vec<usize>,
    pub activation: Activation,
    /// Compute attention once from the embeddings instead of once per layer.
    pub static_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            robot_mlp: vec![64, 32],
            human_mlp: vec![64, 32],
            gcn_layers: 2,
            value_mlp: vec![150, 100, 100],
            motion_mlp: vec![64, 32],
            activation: Activation::Relu,
            static_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let (Some(&r), Some(&h)) = (self.robot_mlp.last(), self.human_mlp.last()) else {
            return Err(Error::contract("embedding MLPs need at least one layer"));
        };
        if r != h {
            return Err(Error::contract(format!(
                "robot and human embeddings must share a width ({r} vs {h})"
            )));
        }
        if self.gcn_layers == 0 {
            return Err(Error::contract("gcn_layers must be at least 1"));
        }
        let all = [
            &self.robot_mlp,
            &self.human_mlp,
            &self.value_mlp,
            &self.motion_mlp,
        ];
        if all.iter().any(|sizes| sizes.contains(&0)) {
            return Err(Error::contract("layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn embed_dim(&self) -> usize {
        *self.robot_mlp.last().expect("validated")
    }

    /// Architecture string stored with saved weights.
    pub fn fingerprint(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        format!(
            "rgl;robot={};human={};gcn={};attn={};value={};motion={};act={:?}",
            join(&self.robot_mlp),
            join(&self.human_mlp),
            self.gcn_layers,
            if self.static_attention {
                "static"
            } else {
                "per-layer"
            },
            join(&self.value_mlp),
            join(&self.motion_mlp),
            self.activation,
        )
        .to_lowercase()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Dense {
    weight: ParamId,
    bias: ParamId,
}

/// Which graph nodes feed the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum HeadRows {
    Robot,
    Humans,
}

/// Tape handles of one batched graph forward.
pub(crate) struct GraphVars {
    pub x: Var,
    pub attention: Vec<Var>,
    pub layers: Vec<Var>,
    pub head: Var,
}

/// Embedding MLPs, per-layer relation and GCN weights, and a head MLP.
#[derive(Clone, Debug)]
pub struct GraphStack {
    config: ModelConfig,
    head_rows: HeadRows,
    store: ParamStore,
    robot_mlp: Vec<Dense>,
    human_mlp: Vec<Dense>,
    relation: Vec<ParamId>,
    gcn: Vec<ParamId>,
    head: Vec<Dense>,
}

fn add_mlp<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    sizes: &[usize],
    rng: &mut R,
) -> Vec<Dense> {
    let mut fan_in = input;
    sizes
        .iter()
        .enumerate()
        .map(|(i, &out)| {
            let weight = store.insert_uniform(format!("{prefix}.{i}.weight"), fan_in, out, rng);
            let bias = store.insert(format!("{prefix}.{i}.bias"), Matrix::zeros(1, out));
            fan_in = out;
            Dense { weight, bias }
        })
        .collect()
}

impl GraphStack {
    pub(crate) fn new<R: Rng + ?Sized>(
        config: &ModelConfig,
        head_rows: HeadRows,
        head_sizes: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let robot_mlp = add_mlp(
            &mut store,
            "robot_embed",
            ROBOT_FEATURES,
            &config.robot_mlp,
            rng,
        );
        let human_mlp = add_mlp(
            &mut store,
            "human_embed",
            HUMAN_FEATURES,
            &config.human_mlp,
            rng,
        );
        let d = config.embed_dim();
        let relations = if config.static_attention {
            1
        } else {
            config.gcn_layers
        };
        let relation = (0..relations)
            .map(|l| store.insert_uniform(format!("relation.{l}"), d, d, rng))
            .collect();
        let gcn = (0..config.gcn_layers)
            .map(|l| store.insert_uniform(format!("gcn.{l}"), d, d, rng))
            .collect();
        let head = add_mlp(&mut store, "head", d, head_sizes, rng);
        Ok(GraphStack {
            config: config.clone(),
            head_rows,
            store,
            robot_mlp,
            human_mlp,
            relation,
            gcn,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Hidden layers get the activation; `activate_last` also applies it to the output layer.
    fn mlp<'p>(
        &self,
        tape: &mut Tape<'p>,
        store: &'p ParamStore,
        layers: &[Dense],
        mut x: Var,
        activate_last: bool,
    ) -> Result<Var> {
        for (i, layer) in layers.iter().enumerate() {
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            x = tape.matmul(x, w)?;
            x = tape.add_row(x, b)?;
            if activate_last || i + 1 < layers.len() {
                x = self.config.activation.apply(tape, x);
            }
        }
        Ok(x)
    }

    /// `softmax(H W_a Hᵀ)` per graph.
    fn relation<'p>(
        &self,
        tape: &mut Tape<'p>,
        store: &'p ParamStore,
        h: Var,
        layer: usize,
        nodes: usize,
    ) -> Result<Var> {
        let wa = tape.param(store, self.relation[layer]);
        let hw = tape.matmul(h, wa)?;
        let logits = tape.block_gram(hw, h, nodes)?;
        Ok(tape.softmax_rows(logits))
    }

    /// Batched forward of every graph in `batch` using the parameters in `store`
    /// (which must have this stack's layout; it need not be `self.store()`).
    pub(crate) fn forward<'p>(
        &self,
        tape: &mut Tape<'p>,
        store: &'p ParamStore,
        batch: &GraphBatch,
    ) -> Result<GraphVars> {
        let b = batch.len();
        let n = batch.num_humans;
        let nodes = n + 1;
        let robot_in = tape.constant(batch.robot.clone());
        let robot = self.mlp(tape, store, &self.robot_mlp, robot_in, true)?;
        let x = if n == 0 {
            robot
        } else {
            let humans_in = tape.constant(batch.humans.clone());
            let humans = self.mlp(tape, store, &self.human_mlp, humans_in, true)?;
            let stacked = tape.concat_rows(robot, humans)?;
            // interleave so each graph's rows are [robot, human 1, .., human N]
            let order = (0..b)
                .flat_map(|g| std::iter::once(g).chain((0..n).map(move |i| b + g * n + i)))
                .collect();
            tape.select_rows(stacked, order)?
        };

        let mut h = x;
        let mut attention = Vec::with_capacity(self.config.gcn_layers);
        let mut layers = Vec::with_capacity(self.config.gcn_layers);
        let fixed = if self.config.static_attention {
            Some(self.relation(tape, store, x, 0, nodes)?)
        } else {
            None
        };
        for l in 0..self.config.gcn_layers {
            let a = match fixed {
                Some(a) => a,
                None => self.relation(tape, store, h, l, nodes)?,
            };
            attention.push(a);
            let w = tape.param(store, self.gcn[l]);
            let ah = tape.block_matmul(a, h, nodes)?;
            let ahw = tape.matmul(ah, w)?;
            let message = self.config.activation.apply(tape, ahw);
            h = tape.add(message, h)?;
            layers.push(h);
        }

        let rows: Vec<usize> = match self.head_rows {
            HeadRows::Robot => (0..b).map(|g| g * nodes).collect(),
            HeadRows::Humans => (0..b)
                .flat_map(|g| (1..nodes).map(move |i| g * nodes + i))
                .collect(),
        };
        let head = if rows.is_empty() {
            // no humans to predict
            tape.constant(Matrix::zeros(0, self.head_output_dim()))
        } else {
            let head_in = tape.select_rows(h, rows)?;
            self.mlp(tape, store, &self.head, head_in, false)?
        };
        Ok(GraphVars {
            x,
            attention,
            layers,
            head,
        })
    }

    fn head_output_dim(&self) -> usize {
        self.store
            .get(self.head.last().expect("head has layers").bias)
            .cols()
    }

    /// Forward with a detached trace of one graph's intermediate matrices.
    pub fn trace(&self, batch: &GraphBatch, index: usize) -> Result<GraphForwardTrace> {
        if index >= batch.len() {
            return Err(Error::contract("trace index outside the batch"));
        }
        let mut tape = Tape::new();
        let vars = self.forward(&mut tape, &self.store, batch)?;
        let nodes = batch.nodes();
        let block = |v: Var| {
            let m = tape.value(v);
            Matrix::from_fn(nodes, m.cols(), |i, j| m.get(index * nodes + i, j))
        };
        let layers: Vec<Matrix> = vars.layers.iter().map(|&v| block(v)).collect();
        Ok(GraphForwardTrace {
            x: block(vars.x),
            attention: vars.attention.iter().map(|&v| block(v)).collect(),
            z: layers.last().expect("at least one layer").clone(),
            layers,
        })
    }
}

/// Intermediate matrices of one graph forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphForwardTrace {
    /// Embedded features, (N+1) × d.
    pub x: Matrix,
    /// Attention of each layer, (N+1) × (N+1).
    pub attention: Vec<Matrix>,
    /// H after each layer.
    pub layers: Vec<Matrix>,
    pub z: Matrix,
}
