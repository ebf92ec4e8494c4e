use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::actor::{ActionRanges, Actor, ActorConfig, ACTION_DIM};
use super::critic::CriticPair;
use super::replay::Batch;
use crate::error::{Error, Result};
use crate::tensor::{load_checkpoint, save_checkpoint, Adam, Graph, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch: usize,
    pub capacity: usize,
    pub actor: ActorConfig,
    pub critic_hidden: Vec<usize>,
    pub target_entropy: f64,
    pub init_alpha: f64,
    /// Uniform-random steps before the first update.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub update_every: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            batch: 64,
            capacity: 200_000,
            actor: ActorConfig::default(),
            critic_hidden: vec![64, 64],
            target_entropy: -(ACTION_DIM as f64),
            init_alpha: 0.2,
            warmup: 2000,
            update_every: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacLosses {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub temperature: f64,
    pub alpha: f64,
    /// Batch mean of log π of the fresh actor samples.
    pub log_prob: f64,
}

/// Actor, twin critics and the log-parameterized temperature.
#[derive(Clone)]
pub struct Sac {
    pub config: SacConfig,
    pub actor: Actor,
    pub critics: CriticPair,
    log_alpha: ParamStore,
    rng: ChaCha8Rng,
    pub updates: u64,
}

impl Sac {
    pub fn new(state_dim: usize, config: SacConfig, ranges: ActionRanges, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(state_dim, &config.actor, ranges, &mut rng);
        let critics = CriticPair::new(state_dim, &config.critic_hidden, &mut rng);
        let mut log_alpha = ParamStore::new();
        log_alpha.add("log_alpha", Tensor::scalar(config.init_alpha.ln()));
        Self {
            config,
            actor,
            critics,
            log_alpha,
            rng,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.iter().next().expect("log_alpha").1.item().exp()
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        let id = self.log_alpha.id("log_alpha").expect("log_alpha");
        self.log_alpha.get_mut(id).data_mut()[0] = alpha.ln();
    }

    fn noise(&mut self, rows: usize) -> Tensor {
        let data = (0..rows * ACTION_DIM).map(|_| self.rng.sample(StandardNormal)).collect();
        Tensor::new(&[rows, ACTION_DIM], data)
    }

    /// `r + γ(1 − done)(min(Q̄₁, Q̄₂)(s′, a″) − α·log π(a″|s′))` with fresh `a″`.
    pub fn critic_targets(&mut self, batch: &Batch) -> Vec<f64> {
        let eps = self.noise(batch.len());
        self.critic_targets_with_noise(batch, eps)
    }

    pub fn critic_targets_with_noise(&self, batch: &Batch, eps: Tensor) -> Vec<f64> {
        let alpha = self.alpha();
        let mut g = Graph::new();
        let pa = self.actor.store.bind(&mut g, false);
        let pt = self.critics.target.bind(&mut g, false);
        let s2 = g.input(batch.next_state.clone());
        let smp = self.actor.sample_graph(&mut g, &pa, s2, eps);
        let (q1, q2) = self.critics.forward(&mut g, &pt, s2, smp.squashed);
        let (q1, q2, lp) = (g.value(q1).data(), g.value(q2).data(), g.value(smp.log_prob).data());
        (0..batch.len())
            .map(|i| batch.reward[i] + self.config.gamma * (1.0 - batch.done[i]) * (q1[i].min(q2[i]) - alpha * lp[i]))
            .collect()
    }

    /// Critic regression losses and gradients toward `targets`.
    pub fn critic_gradients(&self, batch: &Batch, targets: &[f64]) -> (f64, f64, Vec<Tensor>) {
        let mut g = Graph::new();
        let p = self.critics.online.bind(&mut g, true);
        let s = g.input(batch.state.clone());
        let y_act = g.input(batch.raw.map(f64::tanh));
        let (q1, q2) = self.critics.forward(&mut g, &p, s, y_act);
        let y = g.input(Tensor::new(&[batch.len(), 1], targets.to_vec()));
        let mse = |g: &mut crate::tensor::Graph, q| {
            let d = g.sub(q, y);
            let d2 = g.square(d);
            g.mean(d2)
        };
        let l1 = mse(&mut g, q1);
        let l2 = mse(&mut g, q2);
        let total = g.add(l1, l2);
        let grads = g.backward(total);
        (g.value(l1).item(), g.value(l2).item(), p.grads(&self.critics.online, &grads))
    }

    /// Actor loss `mean(α·log π − min(Q₁, Q₂))` at noise `eps`, its gradient
    /// and the per-sample log-densities.
    pub fn actor_gradients(&self, batch: &Batch, alpha: f64, eps: Tensor) -> (f64, Vec<Tensor>, Vec<f64>) {
        let mut g = Graph::new();
        let pa = self.actor.store.bind(&mut g, true);
        let pc = self.critics.online.bind(&mut g, false);
        let s = g.input(batch.state.clone());
        let smp = self.actor.sample_graph(&mut g, &pa, s, eps);
        let (q1, q2) = self.critics.forward(&mut g, &pc, s, smp.squashed);
        let q = g.minimum(q1, q2);
        let ent = g.scale(smp.log_prob, alpha);
        let obj = g.sub(ent, q);
        let loss = g.mean(obj);
        let grads = g.backward(loss);
        let lp = g.value(smp.log_prob).data().to_vec();
        (g.value(loss).item(), pa.grads(&self.actor.store, &grads), lp)
    }

    /// One gradient step on critics, actor and temperature, then Polyak.
    pub fn update(&mut self, batch: &Batch) -> Result<SacLosses> {
        let opt = Adam::with_lr(self.config.lr);
        let targets = self.critic_targets(batch);
        let (c1, c2, cg) = self.critic_gradients(batch, &targets);
        opt.step(&mut self.critics.online, &cg);

        let alpha = self.alpha();
        let eps = self.noise(batch.len());
        let (a_loss, ag, lp) = self.actor_gradients(batch, alpha, eps);
        opt.step(&mut self.actor.store, &ag);

        let mean_lp = lp.iter().sum::<f64>() / lp.len() as f64;
        let log_alpha = alpha.ln();
        let t_loss = -log_alpha * (mean_lp + self.config.target_entropy);
        let t_grad = -(mean_lp + self.config.target_entropy);
        opt.step(&mut self.log_alpha, &[Tensor::scalar(t_grad)]);

        self.critics.update_target(self.config.tau);
        self.updates += 1;
        let losses = SacLosses {
            critic1: c1,
            critic2: c2,
            actor: a_loss,
            temperature: t_loss,
            alpha: self.alpha(),
            log_prob: mean_lp,
        };
        let finite = [c1, c2, a_loss, t_loss, losses.alpha].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::Diverged(format!("SAC update {} produced {losses:?}", self.updates)));
        }
        Ok(losses)
    }

    fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = self.actor.store.named_values();
        out.extend(self.critics.online.named_values());
        out.extend(self.critics.target.named_values().into_iter().map(|(n, t)| (format!("target.{n}"), t)));
        out.extend(self.log_alpha.named_values());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.named())
    }

    /// Restore parameters saved by [`Sac::save`] into a learner of the same
    /// shape. Optimizer moments restart from zero.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let all = load_checkpoint(path)?;
        let pick = |pred: &dyn Fn(&str) -> bool, strip: &str| -> Vec<(String, Tensor)> {
            all.iter()
                .filter(|(n, _)| pred(n))
                .map(|(n, t)| (n.strip_prefix(strip).unwrap_or(n).to_string(), t.clone()))
                .collect()
        };
        let bad = |e: String| Error::Checkpoint(format!("{}: {e}", path.display()));
        self.actor.store.load_values(&pick(&|n| n.starts_with("actor."), "")).map_err(bad)?;
        self.critics
            .online
            .load_values(&pick(&|n| n.starts_with("q1.") || n.starts_with("q2."), ""))
            .map_err(bad)?;
        self.critics.target.load_values(&pick(&|n| n.starts_with("target."), "target.")).map_err(bad)?;
        self.log_alpha.load_values(&pick(&|n| n == "log_alpha", "")).map_err(bad)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::replay::Transition;

    fn small(seed: u64) -> Sac {
        let cfg = SacConfig {
            critic_hidden: vec![16, 16],
            actor: ActorConfig {
                hidden: vec![16, 16],
                ..ActorConfig::default()
            },
            lr: 3e-3,
            ..SacConfig::default()
        };
        Sac::new(3, cfg, ActionRanges::default(), seed)
    }

    fn bandit_batch(rng: &mut ChaCha8Rng) -> Batch {
        // two states with rewards 1 and −0.5, independent of the action
        let ts: Vec<Transition> = (0..32)
            .map(|i| {
                let s = i % 2;
                let state = if s == 0 { vec![1.0, 0.0, 0.0] } else { vec![0.0, 1.0, 0.0] };
                Transition {
                    next_state: state.clone(),
                    state,
                    raw: [(); 4].map(|_| rng.gen_range(-2.0..2.0)),
                    reward: if s == 0 { 1.0 } else { -0.5 },
                    done: false,
                }
            })
            .collect();
        Batch::from_transitions(&ts.iter().collect::<Vec<_>>())
    }

    #[test]
    fn zero_discount_critics_learn_immediate_reward() {
        let mut sac = small(0);
        sac.config.gamma = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut last = SacLosses::default();
        for _ in 0..1500 {
            last = sac.update(&bandit_batch(&mut rng)).unwrap();
        }
        assert!(last.critic1 < 1e-3 && last.critic2 < 1e-3, "{last:?}");
    }

    #[test]
    fn vanishing_temperature_recovers_pure_q_gradient() {
        let sac = small(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = bandit_batch(&mut rng);
        let eps: Vec<f64> = (0..32 * 4).map(|_| rng.sample(StandardNormal)).collect();
        let eps = Tensor::new(&[32, 4], eps);
        let flat = |gs: Vec<Tensor>| gs.into_iter().flat_map(Tensor::into_data).collect::<Vec<f64>>();
        let g0 = flat(sac.actor_gradients(&batch, 0.0, eps.clone()).1);
        let g1 = flat(sac.actor_gradients(&batch, 1e-8, eps).1);
        let dot: f64 = g0.iter().zip(&g1).map(|(a, b)| a * b).sum();
        let n0 = g0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let n1 = g1.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(n0 > 0.0);
        assert!(dot / (n0 * n1) > 0.99);
    }

    #[test]
    fn targets_use_the_smaller_critic() {
        let mut sac = small(4);
        sac.config.gamma = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = bandit_batch(&mut rng);
        let eps = sac.noise(batch.len());
        let both = sac.critic_targets_with_noise(&batch, eps.clone());
        // lifting one critic far above the other isolates the other one
        let only = |sac: &Sac, lift: &str| {
            let mut s = sac.clone();
            let id = s.critics.target.id(lift).unwrap();
            s.critics.target.get_mut(id).data_mut()[0] += 1e6;
            s.critic_targets_with_noise(&batch, eps.clone())
        };
        let via_q1 = only(&sac, "q2.2.bias");
        let via_q2 = only(&sac, "q1.2.bias");
        for i in 0..batch.len() {
            assert!((both[i] - via_q1[i].min(via_q2[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn polyak_unit_tau_copies_online() {
        let mut sac = small(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        sac.update(&bandit_batch(&mut rng)).unwrap();
        assert_ne!(sac.critics.target.named_values(), sac.critics.online.named_values());
        sac.critics.update_target(1.0);
        assert_eq!(sac.critics.target.named_values(), sac.critics.online.named_values());
    }

    #[test]
    fn temperature_falls_when_entropy_exceeds_target() {
        let mut sac = small(8);
        sac.config.target_entropy = -1e3;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a0 = sac.alpha();
        for _ in 0..20 {
            sac.update(&bandit_batch(&mut rng)).unwrap();
        }
        assert!(sac.alpha() < a0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut sac = small(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        sac.update(&bandit_batch(&mut rng)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sac.ckpt");
        sac.save(&path).unwrap();
        let mut other = small(99);
        other.load(&path).unwrap();
        assert_eq!(other.named(), sac.named());
    }
}
