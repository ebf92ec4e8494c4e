//! The operations behind each command-line subcommand, kept here so that
//! tests drive exactly what the binary runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{evaluate, make_driver, train_rl, TrainReport};
use super::{read_episode_log, MetricsReport, RunConfig};
use crate::bc::{bc_loss, bc_train, collect_demonstrations, read_demo, slice_demonstrations, write_demo, BasicModel, BcSample};
use crate::error::{Error, Result};
use crate::obs::EpisodeStatus;
use crate::policy::{episode_seed, Sac, STATE_DIM};

/// Demonstration seeds live in their own stream so they never coincide
/// with training episodes of the same base seed.
const DEMO_STREAM: u64 = 0xDE30_0000;
/// Extra expert episodes tried when some collide.
const DEMO_ATTEMPT_FACTOR: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoFileStats {
    pub path: PathBuf,
    pub seed: u64,
    pub records: usize,
    pub samples: usize,
    pub status: EpisodeStatus,
    pub episode_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub files: Vec<DemoFileStats>,
    pub samples: usize,
    /// Expert episodes that collided and were not kept.
    pub dropped: usize,
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Record `cfg.demo_episodes` collision-free scripted-expert episodes into
/// `out/demo_NNN.jsonl`.
pub fn cmd_collect_demos(cfg: &RunConfig, out: &Path) -> Result<CollectSummary> {
    cfg.validate()?;
    mkdir(out)?;
    let want = cfg.demo_episodes;
    let mut files = Vec::new();
    let mut dropped = 0;
    let mut k = 0;
    while files.len() < want && k < (want * DEMO_ATTEMPT_FACTOR) as u64 {
        let seed = episode_seed(cfg.seed ^ DEMO_STREAM, k);
        k += 1;
        let (mut kept, d) = collect_demonstrations(&cfg.scenario, &[seed], &cfg.expert, &cfg.planner)?;
        dropped += d;
        let Some(ep) = kept.pop() else { continue };
        let path = out.join(format!("demo_{:03}.jsonl", files.len()));
        write_demo(&path, &ep.session)?;
        let samples = slice_demonstrations(&ep.session, cfg.t_c).len();
        log::info!("{}: seed {seed}, {} records, {samples} samples, {:?}", path.display(), ep.session.records.len(), ep.status);
        files.push(DemoFileStats {
            path,
            seed,
            records: ep.session.records.len(),
            samples,
            status: ep.status,
            episode_return: ep.episode_return,
        });
    }
    if files.len() < want {
        return Err(Error::Precondition(format!(
            "only {} of {want} expert episodes were collision-free after {k} attempts",
            files.len()
        )));
    }
    Ok(CollectSummary {
        samples: files.iter().map(|f| f.samples).sum(),
        files,
        dropped,
    })
}

/// `.jsonl` files of a directory in name order.
pub fn jsonl_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    pub train_samples: usize,
    pub held_out_samples: usize,
    /// Per-epoch mean training loss.
    pub losses: Vec<f64>,
    pub held_out_mse: f64,
    /// Variance of the held-out labels in the loss's units; the MSE of the
    /// best constant predictor.
    pub label_variance: f64,
    pub checkpoint: PathBuf,
}

/// Mean over both label components of the population variance.
pub fn label_variance(samples: &[&BcSample]) -> f64 {
    let n = samples.len() as f64;
    let var = |f: &dyn Fn(&BcSample) -> f64| {
        let m = samples.iter().map(|s| f(s)).sum::<f64>() / n;
        samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / n
    };
    0.5 * (var(&|s| s.label.v_f) + var(&|s| s.label.d_f))
}

/// Train the basic model on every demonstration in `demo_dir`, holding out
/// a fifth of the samples, and write `basic_model.ckpt` and `bc_report.json`
/// into `out`.
pub fn cmd_train_bc(cfg: &RunConfig, demo_dir: &Path, out: &Path) -> Result<BcReport> {
    mkdir(out)?;
    let mut samples = Vec::new();
    for p in jsonl_files(demo_dir)? {
        samples.extend(slice_demonstrations(&read_demo(&p)?, cfg.t_c));
    }
    if samples.len() < 5 {
        return Err(Error::Precondition(format!(
            "{} holds {} samples, too few to hold any out",
            demo_dir.display(),
            samples.len()
        )));
    }
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.bc.seed));
    let held = samples.len() / 5;
    let (test, train) = samples.split_at(held);
    let (model, losses) = bc_train(train, &cfg.bc)?;
    let test_refs: Vec<&BcSample> = test.iter().collect();
    let checkpoint = out.join("basic_model.ckpt");
    model.save(&checkpoint)?;
    let report = BcReport {
        train_samples: train.len(),
        held_out_samples: test.len(),
        losses,
        held_out_mse: bc_loss(&model, &test_refs),
        label_variance: label_variance(&test_refs),
        checkpoint,
    };
    write_text(&out.join("bc_report.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(report)
}

fn load_basic(cfg: &RunConfig) -> Result<Option<Arc<BasicModel>>> {
    if !cfg.variant.uses_basic_model() {
        return Ok(None);
    }
    let path = cfg
        .basic_model
        .as_ref()
        .ok_or_else(|| Error::Config(format!("variant {} needs basic_model", cfg.variant)))?;
    Ok(Some(Arc::new(BasicModel::load(path)?)))
}

pub fn cmd_train_rl(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    mkdir(out)?;
    train_rl(cfg, load_basic(cfg)?, Some(out))
}

/// Evaluate `episodes` episodes, writing `report.json`, `report.txt` and
/// one log per episode under `out/episodes`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, episodes: usize, out: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    mkdir(out)?;
    let driver = make_driver(cfg, load_basic(cfg)?)?;
    let sac = match (cfg.variant.uses_actor(), checkpoint) {
        (true, Some(p)) => {
            let mut s = Sac::new(STATE_DIM, cfg.sac.clone(), cfg.ranges, cfg.seed);
            s.load(p)?;
            Some(s)
        }
        (true, None) => return Err(Error::Config(format!("variant {} needs a checkpoint", cfg.variant))),
        (false, _) => None,
    };
    let seeds: Vec<u64> = (0..episodes as u64).map(|k| cfg.eval_seed_base + k).collect();
    let stats = evaluate(cfg, &driver, sac.as_ref().map(|s| &s.actor), &seeds, Some(&out.join("episodes")))?;
    let report = MetricsReport::from_episodes(cfg.variant.name(), &stats);
    write_text(&out.join("report.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    write_text(&out.join("report.txt"), &super::format_table(std::slice::from_ref(&report)))?;
    let per_ep = out.join("episodes.jsonl");
    let mut f = fs::File::create(&per_ep).map_err(|e| Error::io(&per_ep, e))?;
    for s in &stats {
        writeln!(f, "{}", serde_json::to_string(s).expect("stats serialize")).map_err(|e| Error::io(&per_ep, e))?;
    }
    Ok(report)
}

/// Reaggregate the episode logs an evaluation wrote.
pub fn report_from_logs(variant: &str, eval_dir: &Path) -> Result<MetricsReport> {
    let dir = eval_dir.join("episodes");
    let logs = jsonl_files(&dir)?
        .iter()
        .map(|p| read_episode_log(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_logs(variant, &logs))
}

/// Flatten an episode log into a CSV trace; returns the number of rows.
pub fn cmd_replay(log: &Path, out: &mut impl Write) -> Result<usize> {
    let log_data = read_episode_log(log)?;
    let io = |e| Error::io(log, e);
    writeln!(out, "step,t,x,y,heading,speed,v_cmd,steering,status").map_err(io)?;
    for f in &log_data.frames {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.step,
            f.t,
            f.ego.x,
            f.ego.y,
            f.ego.phi,
            f.ego.v,
            f.control.v_cmd,
            f.control.delta_f,
            serde_json::to_value(f.status).expect("status serializes").as_str().unwrap_or("?")
        )
        .map_err(io)?;
    }
    Ok(log_data.frames.len())
}
