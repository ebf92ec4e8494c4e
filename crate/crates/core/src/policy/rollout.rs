use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actor::{Actor, ActorMode};
use super::replay::Transition;
use crate::error::Result;
use crate::harness::{Driver, DrivingEnv, StepOutcome, StepPlan};
use crate::obs::EpisodeStatus;
use crate::planner::MixedAction;
use crate::sim::Collision;

/// Where actor outputs come from during collection.
pub enum ActionSource<'a, R: Rng> {
    /// Uniform over the squashed box (exploration warmup).
    Uniform(&'a Actor, &'a mut R),
    Sample(&'a Actor, &'a mut R),
    /// Mean action.
    Deterministic(&'a Actor),
    /// Variants that never consult an actor.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub seed: u64,
    pub episode_return: f64,
    pub steps: usize,
    pub status: EpisodeStatus,
    pub collision: Option<Collision>,
    /// Mean ego speed over the steps taken (m/s).
    pub mean_speed: f64,
    pub distance: f64,
    pub fallbacks: usize,
    pub mean_lambda: Option<f64>,
    pub mean_eta: Option<f64>,
}

#[derive(Default)]
struct Accumulator {
    ret: f64,
    steps: usize,
    speed_sum: f64,
    start_x: f64,
    fallbacks: usize,
    lambda_sum: f64,
    eta_sum: f64,
    actor_steps: usize,
}

/// One executed step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub transition: Transition,
    pub plan: StepPlan,
    pub outcome: StepOutcome,
}

#[derive(Default)]
pub struct RolloutChunk {
    pub steps: Vec<StepRecord>,
    /// Episodes that ended within the chunk.
    pub episodes: Vec<EpisodeStats>,
}

/// Episode seed `k` of a stream rooted at `base`.
pub fn episode_seed(base: u64, k: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Drives a [`Driver`] through consecutive episodes of one environment.
pub struct Collector {
    pub env: DrivingEnv,
    pub driver: Driver,
    /// Environment as the last episode ended, before the automatic reset.
    pub finished: Option<DrivingEnv>,
    seeds: Box<dyn FnMut(u64) -> u64 + Send>,
    episodes_started: u64,
    a_tilde: MixedAction,
    input: Vec<f64>,
    acc: Accumulator,
}

impl Collector {
    /// `seeds(k)` gives the seed of the `k`-th episode.
    pub fn new(mut env: DrivingEnv, driver: Driver, mut seeds: Box<dyn FnMut(u64) -> u64 + Send>) -> Result<Self> {
        env.reset(seeds(0))?;
        let mut c = Self {
            env,
            driver,
            finished: None,
            seeds,
            episodes_started: 1,
            a_tilde: MixedAction { v_f: 0.0, d_f: 0.0 },
            input: Vec::new(),
            acc: Accumulator::default(),
        };
        c.begin_episode();
        Ok(c)
    }

    fn begin_episode(&mut self) {
        self.driver.reset();
        self.a_tilde = self.driver.basic_action(&self.env.world, &self.env.obs);
        self.input = self.driver.actor_input(&self.env.obs, &self.a_tilde);
        self.acc = Accumulator {
            start_x: self.env.world.ego.pose.x,
            ..Accumulator::default()
        };
    }

    /// Actor input for the current state.
    pub fn state(&self) -> &[f64] {
        &self.input
    }

    /// Execute one step; a finished episode is reported and the next one
    /// started from a fresh seed.
    pub fn step<R: Rng>(&mut self, source: &mut ActionSource<'_, R>) -> Result<(StepRecord, Option<EpisodeStats>)> {
        self.finished = None;
        let actor_out = match source {
            ActionSource::Uniform(actor, rng) => Some(actor.uniform(*rng)),
            ActionSource::Sample(actor, rng) => Some(actor.act(&self.input, ActorMode::Sample(*rng))),
            ActionSource::Deterministic(actor) => Some(actor.act::<R>(&self.input, ActorMode::Deterministic)),
            ActionSource::None => None,
        };
        let speed = self.env.world.ego.pose.v;
        let plan = self.driver.execute(&self.env.world, &self.a_tilde, actor_out.as_ref())?;
        let outcome = self.env.step(plan.control)?;
        let a_tilde_next = self.driver.basic_action(&self.env.world, &self.env.obs);
        let next_input = self.driver.actor_input(&self.env.obs, &a_tilde_next);
        let transition = Transition {
            state: std::mem::replace(&mut self.input, next_input),
            raw: actor_out.map_or([0.0; 4], |o| o.raw),
            reward: outcome.reward.total,
            next_state: self.input.clone(),
            done: matches!(outcome.status, EpisodeStatus::Collided | EpisodeStatus::Succeeded),
        };
        self.a_tilde = a_tilde_next;

        let acc = &mut self.acc;
        acc.ret += outcome.reward.total;
        acc.steps += 1;
        acc.speed_sum += speed;
        acc.fallbacks += plan.rho.is_some_and(|r| r.fallback) as usize;
        if let Some(o) = &actor_out {
            acc.lambda_sum += o.lambda;
            acc.eta_sum += o.eta;
            acc.actor_steps += 1;
        }
        let mut finished = None;
        if outcome.status.is_terminal() {
            let n = acc.actor_steps.max(1) as f64;
            finished = Some(EpisodeStats {
                seed: self.env.episode_seed,
                episode_return: acc.ret,
                steps: acc.steps,
                status: outcome.status,
                collision: outcome.collision,
                mean_speed: acc.speed_sum / acc.steps as f64,
                distance: self.env.world.ego.pose.x - acc.start_x,
                fallbacks: acc.fallbacks,
                mean_lambda: (acc.actor_steps > 0).then(|| acc.lambda_sum / n),
                mean_eta: (acc.actor_steps > 0).then(|| acc.eta_sum / n),
            });
            self.finished = Some(self.env.clone());
            let seed = (self.seeds)(self.episodes_started);
            self.episodes_started += 1;
            self.env.reset(seed)?;
            self.begin_episode();
        }
        Ok((
            StepRecord {
                transition,
                plan,
                outcome,
            },
            finished,
        ))
    }
}

/// Run `steps` environment steps, resetting at episode ends.
pub fn collect_rollout<R: Rng>(collector: &mut Collector, mut source: ActionSource<'_, R>, steps: usize) -> Result<RolloutChunk> {
    let mut chunk = RolloutChunk::default();
    for _ in 0..steps {
        let (rec, done) = collector.step(&mut source)?;
        chunk.steps.push(rec);
        chunk.episodes.extend(done);
    }
    Ok(chunk)
}
