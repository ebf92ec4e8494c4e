use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode_log::{episode_header, EpisodeLogWriter, LogFrame};
use super::{Driver, DrivingEnv, RunConfig};
use crate::bc::BasicModel;
use crate::error::{Error, Result};
use crate::obs::EpisodeStatus;
use crate::policy::{episode_seed, ActionSource, Actor, Collector, EpisodeStats, ReplayBuffer, Sac, SacLosses, STATE_DIM};

/// Evaluation at one point of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub avg_return: f64,
    pub success_rate: f64,
    pub collisions: usize,
    pub mean_speed: f64,
    pub lambda_mean: Option<f64>,
    pub eta_mean: Option<f64>,
}

impl EvalPoint {
    pub fn from_episodes(step: u64, eps: &[EpisodeStats]) -> Self {
        let n = eps.len().max(1) as f64;
        let mean_of = |f: &dyn Fn(&EpisodeStats) -> Option<f64>| -> Option<f64> {
            let xs: Vec<f64> = eps.iter().filter_map(f).collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        };
        Self {
            step,
            avg_return: eps.iter().map(|e| e.episode_return).sum::<f64>() / n,
            success_rate: eps.iter().filter(|e| e.status == EpisodeStatus::Succeeded).count() as f64 / n,
            collisions: eps.iter().filter(|e| e.status == EpisodeStatus::Collided).count(),
            mean_speed: eps.iter().map(|e| e.mean_speed).sum::<f64>() / n,
            lambda_mean: mean_of(&|e| e.mean_lambda),
            eta_mean: mean_of(&|e| e.mean_eta),
        }
    }
}

/// Line of the training metrics log.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRecord {
    Eval(EvalPoint),
    Episode { step: u64, stats: EpisodeStats },
    Update { step: u64, updates: u64, losses: SacLosses },
}

pub struct TrainReport {
    pub curve: Vec<EvalPoint>,
    pub sac: Sac,
    pub episodes: usize,
    pub final_checkpoint: Option<PathBuf>,
}

/// Build the driver a run configuration describes.
pub fn make_driver(cfg: &RunConfig, basic: Option<Arc<BasicModel>>) -> Result<Driver> {
    Driver::new(cfg.variant, cfg.planner.clone(), cfg.mixing, cfg.ranges, basic, cfg.expert.clone())
}

/// Run one episode per seed with the deterministic actor (or none), writing
/// an episode log per seed into `log_dir` when given.
pub fn evaluate(cfg: &RunConfig, driver: &Driver, actor: Option<&Actor>, seeds: &[u64], log_dir: Option<&Path>) -> Result<Vec<EpisodeStats>> {
    if driver.variant.uses_actor() && actor.is_none() {
        return Err(Error::Precondition(format!("variant {} needs a trained actor", driver.variant)));
    }
    if let Some(d) = log_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let env = DrivingEnv::new(cfg.scenario.clone(), seed)?;
        let mut c = Collector::new(env, driver.clone(), Box::new(move |_| seed))?;
        let mut writer = match log_dir {
            Some(d) => Some(EpisodeLogWriter::create(
                &d.join(format!("episode_{seed}.jsonl")),
                &episode_header(&c.env.world, driver.variant, seed),
            )?),
            None => None,
        };
        let mut source: ActionSource<'_, ChaCha8Rng> = match actor {
            Some(a) if driver.variant.uses_actor() => ActionSource::Deterministic(a),
            _ => ActionSource::None,
        };
        loop {
            let (rec, done) = c.step(&mut source)?;
            if let Some(w) = writer.as_mut() {
                let after = c.finished.as_ref().unwrap_or(&c.env);
                w.append(&LogFrame::new(&after.world, &rec.plan, rec.outcome.status, rec.outcome.reward, &after.obs.s_lidar))?;
            }
            if let Some(stats) = done {
                out.push(stats);
                break;
            }
        }
        if let Some(w) = writer {
            w.finish()?;
        }
    }
    Ok(out)
}

struct MetricsSink(Option<BufWriter<File>>, PathBuf);

impl MetricsSink {
    fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        if let Some(w) = self.0.as_mut() {
            writeln!(w, "{}", serde_json::to_string(rec).expect("metrics serialize")).map_err(|e| Error::io(&self.1, e))?;
            w.flush().map_err(|e| Error::io(&self.1, e))?;
        }
        Ok(())
    }
}

/// Train a learned variant for `cfg.budget` environment steps, evaluating
/// at step 0, every `eval_interval` steps and at the end.
///
/// With `out` set, the config, metrics log and checkpoints are written
/// there. A diverged update aborts the run and leaves the last checkpoint.
pub fn train_rl(cfg: &RunConfig, basic: Option<Arc<BasicModel>>, out: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    if !cfg.variant.uses_actor() {
        return Err(Error::Precondition(format!("variant {} has nothing to train", cfg.variant)));
    }
    let driver = make_driver(cfg, basic)?;
    let ckpt_dir = out.map(|d| d.join("checkpoints"));
    let metrics_path = out.map(|d| d.join("metrics.jsonl")).unwrap_or_default();
    let mut sink = MetricsSink(None, metrics_path.clone());
    if let (Some(d), Some(cd)) = (out, &ckpt_dir) {
        fs::create_dir_all(cd).map_err(|e| Error::io(cd, e))?;
        let cfg_path = d.join("config.toml");
        fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| Error::io(&cfg_path, e))?;
        let f = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        sink.0 = Some(BufWriter::new(f));
    }

    let mut sac = Sac::new(STATE_DIM, cfg.sac.clone(), cfg.ranges, cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.sac.capacity, STATE_DIM);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let base = cfg.seed;
    let env = DrivingEnv::new(cfg.scenario.clone(), episode_seed(base, 0))?;
    let mut collector = Collector::new(env, driver.clone(), Box::new(move |k| episode_seed(base, k)))?;
    let eval_seeds = cfg.eval_seeds();
    let mut curve = Vec::new();
    let mut episodes = 0;
    let mut last_ckpt = None;

    let mut run_eval = |step: u64, sac: &Sac, sink: &mut MetricsSink| -> Result<()> {
        let eps = evaluate(cfg, &driver, Some(&sac.actor), &eval_seeds, None)?;
        let p = EvalPoint::from_episodes(step, &eps);
        log::info!("{} seed {} step {step}: eval return {:.1}, success {:.2}, collisions {}", cfg.variant, cfg.seed, p.avg_return, p.success_rate, p.collisions);
        sink.write(&MetricsRecord::Eval(p.clone()))?;
        curve.push(p);
        Ok(())
    };
    run_eval(0, &sac, &mut sink)?;

    for step in 0..cfg.budget {
        let (rec, done) = if (step as usize) < cfg.sac.warmup {
            collector.step(&mut ActionSource::Uniform(&sac.actor, &mut rng))?
        } else {
            collector.step(&mut ActionSource::Sample(&sac.actor, &mut rng))?
        };
        buffer.push(&rec.transition);
        if let Some(stats) = done {
            episodes += 1;
            sink.write(&MetricsRecord::Episode { step: step + 1, stats })?;
        }
        let learning = step as usize >= cfg.sac.warmup && buffer.len() >= cfg.sac.batch;
        if learning && step % cfg.sac.update_every as u64 == 0 {
            let batch = buffer.sample(cfg.sac.batch, &mut rng);
            let losses = sac.update(&batch)?;
            if sac.updates % 1000 == 0 {
                sink.write(&MetricsRecord::Update {
                    step: step + 1,
                    updates: sac.updates,
                    losses,
                })?;
            }
        }
        let done_steps = step + 1;
        if let Some(cd) = &ckpt_dir {
            if cfg.checkpoint_every > 0 && done_steps % cfg.checkpoint_every == 0 {
                let p = cd.join(format!("step_{done_steps}.ckpt"));
                sac.save(&p)?;
                last_ckpt = Some(p);
            }
        }
        if done_steps % cfg.eval_interval == 0 || done_steps == cfg.budget {
            run_eval(done_steps, &sac, &mut sink)?;
        }
    }
    let final_checkpoint = match &ckpt_dir {
        Some(cd) => {
            let p = cd.join("final.ckpt");
            sac.save(&p)?;
            Some(p)
        }
        None => last_ckpt,
    };
    Ok(TrainReport {
        curve,
        sac,
        episodes,
        final_checkpoint,
    })
}
