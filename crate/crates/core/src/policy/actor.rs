use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::planner::MixedAction;
use crate::tensor::{Activation, Bound, Graph, Mlp, ParamStore, Tensor, Var};

/// Raw actor dimensions: additional policy (v_f, d_f), λ and η.
pub const ACTION_DIM: usize = 4;
/// Normalized basic-model action appended to the observation.
pub const A_TILDE_DIM: usize = 2;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Squashed samples are kept this far inside (−1, 1) so atanh stays finite.
const SQUASH_LIMIT: f64 = 1.0 - 1e-6;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Affine ranges of the squashed outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionRanges {
    pub v_max: f64,
    /// Additional-policy lateral target spans `[−d_max, d_max]`.
    pub d_max: f64,
}

impl Default for ActionRanges {
    fn default() -> Self {
        Self { v_max: 15.0, d_max: 7.5 }
    }
}

impl ActionRanges {
    /// Basic-model action scaled to roughly `[−1, 1]` for network inputs.
    pub fn normalize(&self, a: &MixedAction) -> [f64; A_TILDE_DIM] {
        [2.0 * a.v_f / self.v_max - 1.0, a.d_f / self.d_max]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorOutput {
    /// Additional policy.
    pub a: MixedAction,
    pub lambda: f64,
    pub eta: f64,
    /// Pre-squash sample.
    pub raw: [f64; ACTION_DIM],
    /// Log-density of `raw` under the policy, squash correction included.
    pub log_prob: f64,
}

impl ActorOutput {
    /// Squash `raw` and map each component to its range.
    pub fn from_raw(raw: [f64; ACTION_DIM], log_prob: f64, ranges: &ActionRanges) -> Self {
        let y = raw.map(f64::tanh);
        let unit = |t: f64| 0.5 * (t + 1.0);
        Self {
            a: MixedAction {
                v_f: unit(y[0]) * ranges.v_max,
                d_f: y[1] * ranges.d_max,
            },
            lambda: unit(y[2]),
            eta: unit(y[3]),
            raw,
            log_prob,
        }
    }

    pub fn squashed(&self) -> [f64; ACTION_DIM] {
        self.raw.map(f64::tanh)
    }
}

/// `log(1 − tanh²(u))` in a form that stays finite for large `|u|`.
pub fn log_squash_jacobian(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Log-density of a squashed diagonal Gaussian at raw point `u`.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI - log_squash_jacobian(u)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorConfig {
    pub hidden: Vec<usize>,
    /// λ and η produced by the untrained mean action; set through the bias
    /// of their mean heads.
    pub init_lambda: f64,
    pub init_eta: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            init_lambda: 0.1,
            init_eta: 0.9,
        }
    }
}

pub enum ActorMode<'a, R: Rng> {
    Sample(&'a mut R),
    Deterministic,
}

/// Gaussian policy head over `[observation, normalized ã]`.
#[derive(Clone, Debug)]
pub struct Actor {
    pub store: ParamStore,
    pub body: Mlp,
    pub ranges: ActionRanges,
    pub input_dim: usize,
}

/// Graph nodes of a batched reparameterized sample.
pub struct ActorSample {
    pub raw: Var,
    pub squashed: Var,
    /// `[B, 1]` log-densities.
    pub log_prob: Var,
}

impl Actor {
    pub fn new(input_dim: usize, cfg: &ActorConfig, ranges: ActionRanges, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(2 * ACTION_DIM);
        let body = Mlp::new(&mut store, "actor", &sizes, Activation::Relu, rng);
        // (tanh(b) + 1)/2 = target, with the small random init left on top
        let unit_bias = |t: f64| (2.0 * t.clamp(1e-3, 1.0 - 1e-3) - 1.0).atanh();
        let bias = store.get_mut(body.layers.last().unwrap().bias);
        bias.data_mut()[2] += unit_bias(cfg.init_lambda);
        bias.data_mut()[3] += unit_bias(cfg.init_eta);
        Self {
            store,
            body,
            ranges,
            input_dim,
        }
    }

    /// Mean and clamped log-std nodes, each `[B, 4]`.
    pub fn heads(&self, g: &mut Graph, p: &Bound, x: Var) -> (Var, Var) {
        let out = self.body.forward(g, p, x);
        let mean = g.slice_last(out, 0, ACTION_DIM);
        let log_std = g.slice_last(out, ACTION_DIM, ACTION_DIM);
        (mean, g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX))
    }

    /// Reparameterized sample `u = μ + σ·ε` with its log-density, for a batch
    /// of inputs `x` and standard-normal noise `eps` (`[B, 4]`).
    pub fn sample_graph(&self, g: &mut Graph, p: &Bound, x: Var, eps: Tensor) -> ActorSample {
        let (mean, log_std) = self.heads(g, p, x);
        let eps = g.input(eps);
        let std = g.exp(log_std);
        let noise = g.mul(std, eps);
        let raw = g.add(mean, noise);
        let squashed = g.tanh(raw);
        // −½ε² − log σ − ½log 2π − log(1 − tanh² u), summed over dims
        let e2 = g.square(eps);
        let gauss = g.scale(e2, -0.5);
        let gauss = g.sub(gauss, log_std);
        let neg2u = g.scale(raw, -2.0);
        let sp = g.softplus(neg2u);
        let jac = g.add(raw, sp);
        let jac = g.add_scalar(jac, -std::f64::consts::LN_2);
        let jac = g.scale(jac, 2.0);
        let per_dim = g.add(gauss, jac);
        let per_dim = g.add_scalar(per_dim, -HALF_LOG_2PI);
        let ones = g.input(Tensor::full(&[ACTION_DIM, 1], 1.0));
        let log_prob = g.matmul(per_dim, ones);
        ActorSample { raw, squashed, log_prob }
    }

    /// Mean and log-std for one input.
    pub fn distribution(&self, input: &[f64]) -> ([f64; ACTION_DIM], [f64; ACTION_DIM]) {
        assert_eq!(input.len(), self.input_dim, "actor input width");
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let x = g.input(Tensor::new(&[1, self.input_dim], input.to_vec()));
        let (m, ls) = self.heads(&mut g, &p, x);
        let to_arr = |t: &Tensor| -> [f64; ACTION_DIM] { t.data().try_into().expect("four heads") };
        (to_arr(g.value(m)), to_arr(g.value(ls)))
    }

    /// Sampled (training) or mean (evaluation) action for one input.
    pub fn act<R: Rng>(&self, input: &[f64], mode: ActorMode<'_, R>) -> ActorOutput {
        let (mean, log_std) = self.distribution(input);
        let raw = match mode {
            ActorMode::Deterministic => mean,
            ActorMode::Sample(rng) => {
                let mut u = [0.0; ACTION_DIM];
                for i in 0..ACTION_DIM {
                    let e: f64 = rng.sample(StandardNormal);
                    u[i] = mean[i] + log_std[i].exp() * e;
                }
                u
            }
        };
        ActorOutput::from_raw(raw, squashed_log_prob(&raw, &mean, &log_std), &self.ranges)
    }

    /// Uniform action over the squashed box, used before learning starts.
    pub fn uniform(&self, rng: &mut impl Rng) -> ActorOutput {
        let raw = [(); ACTION_DIM].map(|_| rng.gen_range(-SQUASH_LIMIT..SQUASH_LIMIT).atanh());
        ActorOutput::from_raw(raw, 0.0, &self.ranges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outputs_stay_in_range() {
        let r = ActionRanges::default();
        for raw in [[-50.0, 50.0, -50.0, 50.0], [0.0; 4], [3.0, -3.0, 1.0, -1.0]] {
            let o = ActorOutput::from_raw(raw, 0.0, &r);
            assert!((0.0..=15.0).contains(&o.a.v_f));
            assert!(o.a.d_f.abs() <= 7.5);
            assert!((0.0..=1.0).contains(&o.lambda) && (0.0..=1.0).contains(&o.eta));
        }
    }

    #[test]
    fn deterministic_mode_is_squashed_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Actor::new(6, &ActorConfig::default(), ActionRanges::default(), &mut rng);
        let x = [0.1, -0.2, 0.3, 0.0, 0.5, -1.0];
        let (mean, _) = actor.distribution(&x);
        let o = actor.act::<ChaCha8Rng>(&x, ActorMode::Deterministic);
        assert_eq!(o.raw, mean);
        assert_eq!(o, actor.act::<ChaCha8Rng>(&x, ActorMode::Deterministic));
    }

    #[test]
    fn tiny_std_samples_collapse_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut actor = Actor::new(3, &ActorConfig::default(), ActionRanges::default(), &mut rng);
        let last = actor.body.layers.last().unwrap().clone();
        let w = actor.store.get_mut(last.weight);
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            if i % 8 >= 4 {
                *v = 0.0;
            }
        }
        let b = actor.store.get_mut(last.bias);
        b.data_mut()[4..].fill(-1e3);
        let x = [0.4, 0.1, -0.7];
        let det = actor.act::<ChaCha8Rng>(&x, ActorMode::Deterministic);
        let s = actor.act(&x, ActorMode::Sample(&mut rng));
        for i in 0..4 {
            assert!((s.squashed()[i] - det.squashed()[i]).abs() <= 5.0 * LOG_STD_MIN.exp());
        }
    }

    #[test]
    fn graph_log_prob_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let actor = Actor::new(5, &ActorConfig::default(), ActionRanges::default(), &mut rng);
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let eps: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).cos() * 1.5).collect();
        let mut g = Graph::new();
        let p = actor.store.bind(&mut g, false);
        let x = g.input(Tensor::new(&[2, 5], xs.clone()));
        let s = actor.sample_graph(&mut g, &p, x, Tensor::new(&[2, 4], eps));
        for b in 0..2 {
            let (m, ls) = actor.distribution(&xs[b * 5..b * 5 + 5]);
            let u = &g.value(s.raw).data()[b * 4..b * 4 + 4];
            let lp = squashed_log_prob(u, &m, &ls);
            assert!((g.value(s.log_prob).data()[b] - lp).abs() < 1e-10);
        }
    }

    #[test]
    fn squashed_density_matches_histogram() {
        // brute force: the density of y = tanh(u) integrates per bin to the
        // empirical sample fraction
        let (m, ls) = (0.4f64, -0.3f64);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let y = (m + ls.exp() * e).tanh();
            let k = (((y + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
            counts[k] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let (lo, hi) = (-1.0 + 2.0 * k as f64 / bins as f64, -1.0 + 2.0 * (k + 1) as f64 / bins as f64);
            // midpoint rule on a fine grid, density in y-space
            let steps = 200;
            let mut mass = 0.0;
            for j in 0..steps {
                let y: f64 = lo + (hi - lo) * (j as f64 + 0.5) / steps as f64;
                let u = y.clamp(-SQUASH_LIMIT, SQUASH_LIMIT).atanh();
                mass += squashed_log_prob(&[u], &[m], &[ls]).exp() * (hi - lo) / steps as f64;
            }
            let frac = c as f64 / n as f64;
            assert!((mass - frac).abs() < 4e-3, "bin {k}: density mass {mass} vs empirical {frac}");
        }
    }

    #[test]
    fn stable_jacobian_matches_naive_form() {
        for u in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let naive = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((log_squash_jacobian(u) - naive).abs() < 1e-12);
        }
        assert!(log_squash_jacobian(400.0).is_finite());
    }

    #[test]
    fn uniform_actions_cover_the_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let actor = Actor::new(3, &ActorConfig::default(), ActionRanges::default(), &mut rng);
        let (mut lo, mut hi) = (1.0f64, 0.0f64);
        for _ in 0..2000 {
            let o = actor.uniform(&mut rng);
            lo = lo.min(o.lambda);
            hi = hi.max(o.lambda);
        }
        assert!(lo < 0.01 && hi > 0.99);
    }
}
