//! Observation vector, shaped reward and episode termination.
//!
//! Feature order (schema `evodrive-obs-v1`), every entry clamped to [−1, 1]:
//!
//! | index | feature |
//! |-------|---------|
//! | 0 | speed / v_max |
//! | 1 | last front-wheel angle / δ_max |
//! | 2 | last commanded speed / v_max |
//! | 3 | lateral offset from the nearest lane center / lane width |
//! | 4, 5 | sin, cos of heading relative to the road |
//! | 6 | distance to the left road edge / road half-width |
//! | 7 | distance to the right road edge / road half-width |
//! | 8 | (φ_t − φ_{t−1}) / (T·ω_max) |
//! | 9..14 | checkpoint 50 m ahead: Δx/100, Δy/half-width, sin Δφ, cos Δφ, lane width/5 |
//! | 14..19 | checkpoint 100 m ahead, same layout |
//! | 19..259 | lidar ranges / max range, beam i at −2πi/240 from the heading |
//!
//! Checkpoints lie on the road centerline, are clipped at the destination and
//! are expressed in the ego frame.

use serde::{Deserialize, Serialize};

use crate::sim::{cast_lidar, detect_collision, Collision, WorldState};
use crate::{Error, Result};

pub const EGO_DIM: usize = 9;
pub const NAVI_DIM: usize = 10;
pub const LIDAR_DIM: usize = 240;
pub const OBS_DIM: usize = EGO_DIM + NAVI_DIM + LIDAR_DIM;
pub const OBS_SCHEMA: &str = "evodrive-obs-v1";

pub const YAW_RATE_MAX: f64 = 1.0;
pub const CHECKPOINTS: [f64; 2] = [50.0, 100.0];
pub const SUCCESS_RADIUS: f64 = 3.0;

pub const C_D: f64 = 1.5;
pub const C_V: f64 = 0.5;
pub const C_C: f64 = -5.0;
pub const C_S: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub s_ego: [f64; EGO_DIM],
    pub s_navi: [f64; NAVI_DIM],
    pub s_lidar: Vec<f64>,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend_from_slice(&self.s_ego);
        v.extend_from_slice(&self.s_navi);
        v.extend_from_slice(&self.s_lidar);
        v
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        if s.len() != OBS_DIM {
            return Err(Error::Precondition(format!(
                "observation needs {OBS_DIM} values, got {}",
                s.len()
            )));
        }
        Ok(Self {
            s_ego: s[..EGO_DIM].try_into().unwrap(),
            s_navi: s[EGO_DIM..EGO_DIM + NAVI_DIM].try_into().unwrap(),
            s_lidar: s[EGO_DIM + NAVI_DIM..].to_vec(),
        })
    }
}

fn clamp1(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

pub fn build_observation(world: &WorldState) -> Result<Observation> {
    let e = &world.ego;
    let p = e.pose;
    let road = &world.road;
    let hw = road.half_width();
    if !(p.x.is_finite() && p.y.is_finite() && p.phi.is_finite() && p.v.is_finite()) {
        return Err(Error::WorldFault(format!("non-finite ego pose {p:?}")));
    }
    if p.y.abs() > hw || p.x < -road.length || p.x > 2.0 * road.length {
        return Err(Error::WorldFault(format!(
            "ego off the map at ({:.2}, {:.2})",
            p.x, p.y
        )));
    }
    let lim = world.limits;
    let lane = road.lane_index(p.y);
    let s_ego = [
        p.v / lim.v_max,
        e.last_control.delta_f / lim.delta_max,
        e.last_control.v_cmd / lim.v_max,
        (p.y - road.lane_center(lane)) / road.lane_width,
        p.phi.sin(),
        p.phi.cos(),
        (road.left_boundary() - p.y) / hw,
        (p.y - road.right_boundary()) / hw,
        crate::sim::normalize_angle(p.phi - e.prev_phi) / (world.dt * YAW_RATE_MAX),
    ]
    .map(clamp1);

    let mut s_navi = [0.0; NAVI_DIM];
    let (s, c) = p.phi.sin_cos();
    for (k, ahead) in CHECKPOINTS.iter().enumerate() {
        let cx = (p.x + ahead).min(road.destination_x);
        let (dx, dy) = (cx - p.x, 0.0 - p.y);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        let dphi = -p.phi;
        let f = [lx / 100.0, ly / hw, dphi.sin(), dphi.cos(), road.lane_width / 5.0];
        s_navi[k * 5..k * 5 + 5].copy_from_slice(&f.map(clamp1));
    }

    let s_lidar = cast_lidar(world, LIDAR_DIM, world.lidar.max_range);
    Ok(Observation {
        s_ego,
        s_navi,
        s_lidar,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Collided,
    Succeeded,
    TimedOut,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_d: f64,
    pub r_v: f64,
    pub r_c: f64,
    pub r_s: f64,
    pub total: f64,
}

/// Reward from the scalars it depends on; used directly when replaying logs.
pub fn reward_terms(x_t: f64, x_t1: f64, v_t: f64, v_max: f64, status: EpisodeStatus) -> RewardBreakdown {
    let r_d = C_D * (x_t1 - x_t);
    let r_v = C_V * v_t / v_max;
    let r_c = if status == EpisodeStatus::Collided { C_C } else { 0.0 };
    let r_s = if status == EpisodeStatus::Succeeded { C_S } else { 0.0 };
    RewardBreakdown {
        r_d,
        r_v,
        r_c,
        r_s,
        total: r_d + r_v + r_c + r_s,
    }
}

/// `status` is the status reached by `next`.
pub fn compute_reward(prev: &WorldState, next: &WorldState, status: EpisodeStatus) -> RewardBreakdown {
    reward_terms(
        prev.ego.pose.x,
        next.ego.pose.x,
        prev.ego.pose.v,
        prev.limits.v_max,
        status,
    )
}

/// Collision is checked first, then success, then the step cap.
pub fn check_termination(world: &WorldState, max_steps: u64) -> (EpisodeStatus, Option<Collision>) {
    if let Some(c) = detect_collision(world) {
        return (EpisodeStatus::Collided, Some(c));
    }
    if world.road.destination_x - world.ego.pose.x <= SUCCESS_RADIUS {
        return (EpisodeStatus::Succeeded, None);
    }
    if world.step >= max_steps {
        return (EpisodeStatus::TimedOut, None);
    }
    (EpisodeStatus::Running, None)
}
