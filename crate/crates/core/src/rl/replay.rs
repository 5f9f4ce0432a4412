use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Raw action in `[-1, 1]^D`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
    pushed: u64,
}

/// Column-stacked minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[&Transition]) -> Result<Batch> {
        let first = ts.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        if ts.iter().any(|t| t.state.len() != sd || t.next_state.len() != sd || t.action.len() != ad) {
            return Err(Error::invalid("transitions in a batch must share dimensions"));
        }
        let n = ts.len();
        let stack = |f: &dyn Fn(&Transition) -> &[f64], d: usize| {
            Array2::from_shape_vec((n, d), ts.iter().flat_map(|t| f(t).iter().copied()).collect()).expect("sized")
        };
        Ok(Batch {
            states: stack(&|t| &t.state, sd),
            actions: stack(&|t| &t.action, ad),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: stack(&|t| &t.next_state, sd),
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be >= 1"));
        }
        Ok(ReplayBuffer { capacity, items: Vec::new(), head: 0, pushed: 0 })
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

    /// Total pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.pushed += 1;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Distinct storage indices drawn uniformly.
    pub fn sample_indices(&self, batch: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::NotReady { have: self.items.len(), need: batch.max(1) });
        }
        Ok(index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut SimRng) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        let ts: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&ts)
    }
}
