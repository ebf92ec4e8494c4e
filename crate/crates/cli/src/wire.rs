//! JSON messages exchanged with UI clients over the teleop WebSocket.
//!
//! Every message is an object tagged by `"type"`. Clients must open with
//! `hello`; every later client message is answered by exactly one `ack` or
//! `error`.

use evodrive_core::harness::{LogFrame, LOG_FORMAT};
use evodrive_core::obs::{EpisodeStatus, OBS_SCHEMA};
use evodrive_core::sim::{ActorKind, VehiclePose, WorldState};
use evodrive_core::bc::{DEMO_FORMAT, DEMO_VERSION};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;
/// Beams sent per frame; the full scan is decimated by striding.
pub const WIRE_BEAMS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Driver,
    Viewer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello { role: Role, protocol: u32 },
    /// Both components in [−1, 1].
    Control { steer: f64, accel: f64 },
    SessionCmd {
        #[serde(flatten)]
        cmd: SessionCommand,
    },
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "hello",
            ClientMessage::Control { .. } => "control",
            ClientMessage::SessionCmd { .. } => "session_cmd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum SessionCommand {
    StartDemo,
    StopDemo,
    StartReplay { path: String },
    Pause,
    Resume,
    Reset { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaIds {
    pub protocol: u32,
    pub observation: String,
    pub demo_format: String,
    pub demo_version: u32,
    pub episode_log: String,
}

impl SchemaIds {
    pub fn current() -> Self {
        Self {
            protocol: PROTOCOL_VERSION,
            observation: OBS_SCHEMA.to_string(),
            demo_format: DEMO_FORMAT.to_string(),
            demo_version: DEMO_VERSION,
            episode_log: LOG_FORMAT.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    Live,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireActor {
    pub id: u32,
    pub kind: ActorKind,
    pub pose: VehiclePose,
    pub length: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub source: FrameSource,
    /// Live sessions restart at every reset; replay sessions at every
    /// start_replay.
    pub session: u64,
    /// Strictly increasing within a session.
    pub step: u64,
    pub t: f64,
    pub ego: VehiclePose,
    pub actors: Vec<WireActor>,
    /// Normalized ranges of every fourth beam.
    pub lidar: Vec<f64>,
    pub status: EpisodeStatus,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello { role: Role, schema: SchemaIds },
    Frame(WireFrame),
    Ack {
        /// Kind of the acknowledged client message.
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Error { code: ErrorCode, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    DriverBusy,
    NotFound,
    BadMessage,
    HelloRequired,
    NotDriver,
    Precondition,
    Internal,
}

/// Stride-decimate a full scan onto [`WIRE_BEAMS`] beams.
pub fn decimate_lidar(full: &[f64]) -> Vec<f64> {
    if full.len() <= WIRE_BEAMS {
        return full.to_vec();
    }
    let stride = full.len() / WIRE_BEAMS;
    full.iter().step_by(stride).take(WIRE_BEAMS).copied().collect()
}

impl WireFrame {
    pub fn live(session: u64, world: &WorldState, lidar: &[f64], status: EpisodeStatus, reward: f64) -> Self {
        Self {
            source: FrameSource::Live,
            session,
            step: world.step - 1,
            t: world.time(),
            ego: world.ego.pose,
            actors: world
                .actors
                .iter()
                .map(|a| WireActor {
                    id: a.id,
                    kind: a.kind(),
                    pose: a.pose,
                    length: a.geometry.length,
                    width: a.geometry.width,
                })
                .collect(),
            lidar: decimate_lidar(lidar),
            status,
            reward,
        }
    }

    pub fn replay(session: u64, f: &LogFrame) -> Self {
        Self {
            source: FrameSource::Replay,
            session,
            step: f.step,
            t: f.t,
            ego: f.ego,
            actors: f
                .actors
                .iter()
                .map(|a| WireActor {
                    id: a.id,
                    kind: a.kind,
                    pose: a.pose,
                    length: a.length,
                    width: a.width,
                })
                .collect(),
            lidar: decimate_lidar(&f.lidar),
            status: f.status,
            reward: f.reward.total,
        }
    }
}
