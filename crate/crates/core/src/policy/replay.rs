use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actor::ACTION_DIM;
use crate::tensor::Tensor;

/// One environment step as seen by the learner. `state` is the actor input
/// (observation followed by the normalized basic-model action).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub raw: [f64; ACTION_DIM],
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal by collision or success; time limits do not end bootstrapping.
    pub done: bool,
}

pub struct Batch {
    pub state: Tensor,
    pub raw: Tensor,
    pub reward: Vec<f64>,
    pub next_state: Tensor,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let dim = ts.first().map_or(0, |t| t.state.len());
        let mut state = Vec::with_capacity(ts.len() * dim);
        let mut next_state = Vec::with_capacity(ts.len() * dim);
        let mut raw = Vec::with_capacity(ts.len() * ACTION_DIM);
        for t in ts {
            state.extend(&t.state);
            next_state.extend(&t.next_state);
            raw.extend(t.raw);
        }
        Self {
            state: Tensor::new(&[ts.len(), dim], state),
            raw: Tensor::new(&[ts.len(), ACTION_DIM], raw),
            reward: ts.iter().map(|t| t.reward).collect(),
            next_state: Tensor::new(&[ts.len(), dim], next_state),
            done: ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// FIFO ring of transitions stored in single precision.
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    states: Vec<f32>,
    next_states: Vec<f32>,
    raws: Vec<f32>,
    rewards: Vec<f32>,
    dones: Vec<bool>,
    /// Slot the next push overwrites.
    head: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            state_dim,
            states: vec![0.0; capacity * state_dim],
            next_states: vec![0.0; capacity * state_dim],
            raws: vec![0.0; capacity * ACTION_DIM],
            rewards: vec![0.0; capacity],
            dones: vec![false; capacity],
            head: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.state.len(), self.state_dim, "transition state width");
        assert_eq!(t.next_state.len(), self.state_dim, "transition next-state width");
        let (i, d) = (self.head, self.state_dim);
        for (dst, &x) in self.states[i * d..(i + 1) * d].iter_mut().zip(&t.state) {
            *dst = x as f32;
        }
        for (dst, &x) in self.next_states[i * d..(i + 1) * d].iter_mut().zip(&t.next_state) {
            *dst = x as f32;
        }
        for (dst, &x) in self.raws[i * ACTION_DIM..(i + 1) * ACTION_DIM].iter_mut().zip(&t.raw) {
            *dst = x as f32;
        }
        self.rewards[i] = t.reward as f32;
        self.dones[i] = t.done;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Stored transition by age rank, 0 being the oldest.
    pub fn get(&self, rank: usize) -> Transition {
        assert!(rank < self.len, "replay index {rank} out of {}", self.len);
        let i = (self.head + self.capacity - self.len + rank) % self.capacity;
        let d = self.state_dim;
        let widen = |s: &[f32]| s.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
        let raw = widen(&self.raws[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
        Transition {
            state: widen(&self.states[i * d..(i + 1) * d]),
            raw: raw.try_into().expect("action width"),
            reward: f64::from(self.rewards[i]),
            next_state: widen(&self.next_states[i * d..(i + 1) * d]),
            done: self.dones[i],
        }
    }

    /// Uniform batch of distinct transitions.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Batch {
        assert!(batch <= self.len, "batch {batch} exceeds buffer fill {}", self.len);
        let ts: Vec<Transition> = index::sample(rng, self.len, batch).into_iter().map(|r| self.get(r)).collect();
        Batch::from_transitions(&ts.iter().collect::<Vec<_>>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(k: usize) -> Transition {
        Transition {
            state: vec![k as f64, 0.5],
            raw: [k as f64, 0.0, -1.0, 2.0],
            reward: k as f64 * 0.25,
            next_state: vec![k as f64 + 1.0, 0.5],
            done: k % 3 == 0,
        }
    }

    #[test]
    fn round_trip_in_single_precision() {
        let mut b = ReplayBuffer::new(4, 2);
        b.push(&tr(7));
        assert_eq!(b.get(0), tr(7));
    }

    #[test]
    fn batch_has_distinct_rows() {
        let mut b = ReplayBuffer::new(50, 2);
        for k in 0..50 {
            b.push(&tr(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(50, &mut rng);
        let mut firsts: Vec<i64> = (0..50).map(|i| batch.state.row(i)[0] as i64).collect();
        firsts.sort();
        assert_eq!(firsts, (0..50).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn fifo_eviction(cap in 1usize..20, pushes in 0usize..60) {
            let mut b = ReplayBuffer::new(cap, 2);
            for k in 0..pushes {
                b.push(&tr(k));
                prop_assert!(b.len() <= cap);
            }
            prop_assert_eq!(b.len(), pushes.min(cap));
            let oldest = pushes.saturating_sub(cap);
            for r in 0..b.len() {
                prop_assert_eq!(b.get(r).state[0] as usize, oldest + r);
            }
        }
    }
}
