use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AgentVariant, StepPlan};
use crate::error::{Error, Result};
use crate::obs::{reward_terms, EpisodeStatus, RewardBreakdown};
use crate::planner::MixedAction;
use crate::sim::{ActorKind, ControlInput, VehiclePose, WorldState};

pub const LOG_FORMAT: &str = "evodrive-episode";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub format: String,
    pub variant: AgentVariant,
    pub seed: u64,
    pub dt: f64,
    pub v_max: f64,
    pub half_width: f64,
    pub lane_count: usize,
    pub lane_width: f64,
    pub destination_x: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    /// Ego before the first step.
    pub initial: VehiclePose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorSnapshot {
    pub id: u32,
    pub kind: ActorKind,
    pub pose: VehiclePose,
    pub length: f64,
    pub width: f64,
}

impl ActorSnapshot {
    pub fn of_world(world: &WorldState) -> Vec<Self> {
        world
            .actors
            .iter()
            .map(|a| ActorSnapshot {
                id: a.id,
                kind: a.kind(),
                pose: a.pose,
                length: a.geometry.length,
                width: a.geometry.width,
            })
            .collect()
    }
}

/// World after step `step` (0-based) together with what produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFrame {
    pub step: u64,
    pub t: f64,
    pub ego: VehiclePose,
    pub control: ControlInput,
    pub actors: Vec<ActorSnapshot>,
    pub status: EpisodeStatus,
    pub reward: RewardBreakdown,
    pub target: Option<MixedAction>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub fallback: bool,
    /// Normalized lidar ranges after the step.
    pub lidar: Vec<f64>,
}

impl LogFrame {
    pub fn new(world: &WorldState, plan: &StepPlan, status: EpisodeStatus, reward: RewardBreakdown, lidar: &[f64]) -> Self {
        Self {
            step: world.step - 1,
            t: world.time(),
            ego: world.ego.pose,
            control: plan.control,
            actors: ActorSnapshot::of_world(world),
            status,
            reward,
            target: plan.target,
            lambda: plan.actor.map(|a| a.lambda),
            eta: plan.actor.map(|a| a.eta),
            fallback: plan.rho.is_some_and(|r| r.fallback),
            lidar: lidar.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub frames: Vec<LogFrame>,
}

impl EpisodeLog {
    pub fn final_status(&self) -> EpisodeStatus {
        self.frames.last().map_or(EpisodeStatus::Running, |f| f.status)
    }

    /// Per-step rewards rebuilt from the logged poses and statuses alone.
    pub fn recomputed_rewards(&self) -> Vec<RewardBreakdown> {
        let mut prev = self.header.initial;
        self.frames
            .iter()
            .map(|f| {
                let r = reward_terms(prev.x, f.ego.x, prev.v, self.header.v_max, f.status);
                prev = f.ego;
                r
            })
            .collect()
    }

    /// Ego speed at the start of every step.
    pub fn step_speeds(&self) -> Vec<f64> {
        std::iter::once(self.header.initial.v)
            .chain(self.frames.iter().map(|f| f.ego.v))
            .take(self.frames.len())
            .collect()
    }
}

pub struct EpisodeLogWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl EpisodeLogWriter {
    pub fn create(path: &Path, header: &EpisodeHeader) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(f);
        writeln!(out, "{}", serde_json::to_string(header).expect("header serializes")).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, frame: &LogFrame) -> Result<()> {
        let line = serde_json::to_string(frame).expect("frame serializes");
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn episode_header(world: &WorldState, variant: AgentVariant, seed: u64) -> EpisodeHeader {
    let r = &world.road;
    EpisodeHeader {
        format: LOG_FORMAT.to_string(),
        variant,
        seed,
        dt: world.dt,
        v_max: world.limits.v_max,
        half_width: r.half_width(),
        lane_count: r.lane_count,
        lane_width: r.lane_width,
        destination_x: r.destination_x,
        ego_length: world.ego.geometry.length,
        ego_width: world.ego.geometry.width,
        initial: world.ego.pose,
    }
}

/// Read a log. A malformed or out-of-order line is reported with the last
/// valid step before it.
pub fn read_episode_log(path: &Path) -> Result<EpisodeLog> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "empty episode log"))?
        .map_err(|e| Error::io(path, e))?;
    let header: EpisodeHeader =
        serde_json::from_str(&first).map_err(|e| Error::format(path, 1, format!("bad header: {e}")))?;
    if header.format != LOG_FORMAT {
        return Err(Error::format(path, 1, format!("not an episode log ({})", header.format)));
    }
    let mut frames: Vec<LogFrame> = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let last = frames.last().map_or("none".to_string(), |f| f.step.to_string());
        let frame: LogFrame = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, n, format!("truncated after step {last}: {e}")))?;
        if frame.step != frames.len() as u64 {
            return Err(Error::format(
                path,
                n,
                format!("expected step {}, found {} (last valid step {last})", frames.len(), frame.step),
            ));
        }
        frames.push(frame);
    }
    Ok(EpisodeLog { header, frames })
}
