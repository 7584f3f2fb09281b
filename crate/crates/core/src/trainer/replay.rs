use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Action, JointState};

pub const DEFAULT_REPLAY_CAPACITY: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JointState,
    pub action: Action,
    pub reward: f64,
    pub next_state: JointState,
    /// The episode ended on this step; `next_state` is never bootstrapped.
    pub terminal: bool,
    /// Discounted return from `state` onward; set on demonstrations only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_to_go: Option<f64>,
}

/// Bounded FIFO of transitions; the oldest are evicted first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl Default for ReplayMemory {
    fn default() -> Self {
        ReplayMemory::new(DEFAULT_REPLAY_CAPACITY)
    }
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            capacity: capacity.max(1),
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct transitions chosen uniformly; all of them if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        let n = n.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let memory: ReplayMemory = serde_json::from_str(&text)?;
        if memory.items.len() > memory.capacity {
            return Err(Error::contract(format!(
                "replay file holds {} transitions but capacity is {}",
                memory.items.len(),
                memory.capacity
            )));
        }
        Ok(memory)
    }
}
