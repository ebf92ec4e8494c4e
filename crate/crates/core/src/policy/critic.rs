use rand::Rng;

use super::actor::ACTION_DIM;
use crate::tensor::{Activation, Bound, Graph, Mlp, ParamStore, Var};

/// Two action-value networks sharing one store, plus a target copy with the
/// same layout.
#[derive(Clone, Debug)]
pub struct CriticPair {
    pub online: ParamStore,
    pub target: ParamStore,
    pub q1: Mlp,
    pub q2: Mlp,
    pub state_dim: usize,
}

impl CriticPair {
    /// Critics score `[state, tanh(raw action)]`.
    pub fn new(state_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut online = ParamStore::new();
        let mut sizes = vec![state_dim + ACTION_DIM];
        sizes.extend(hidden);
        sizes.push(1);
        let q1 = Mlp::new(&mut online, "q1", &sizes, Activation::Relu, rng);
        let q2 = Mlp::new(&mut online, "q2", &sizes, Activation::Relu, rng);
        let target = online.clone();
        Self {
            online,
            target,
            q1,
            q2,
            state_dim,
        }
    }

    /// `[B, 1]` outputs of both critics; `p` may bind either store.
    pub fn forward(&self, g: &mut Graph, p: &Bound, state: Var, squashed: Var) -> (Var, Var) {
        let x = g.concat(&[state, squashed], 1);
        (self.q1.forward(g, p, x), self.q2.forward(g, p, x))
    }

    pub fn update_target(&mut self, tau: f64) {
        self.target.polyak_from(&self.online, tau);
    }
}
