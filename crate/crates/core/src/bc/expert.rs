use serde::{Deserialize, Serialize};

use super::demo::{DemoHeader, DemoSession, DemonstrationRecord};
use crate::error::Result;
use crate::harness::DrivingEnv;
use crate::obs::EpisodeStatus;
use crate::planner::{rho_step, MixedAction, PlannerConfig, PlannerSolution};
use crate::sim::{ego_idm_accel, ego_mobil, IdmParams, LaneDecision, MobilParams, ScenarioConfig, WorldState};

/// Lateral distance from the target lane center at which a change counts
/// as complete.
const LANE_REACHED: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub idm: IdmParams,
    pub mobil: MobilParams,
    /// Horizon over which the IDM acceleration is projected into a target speed.
    pub t_c: f64,
    /// Minimum time between lane-change decisions.
    pub lane_cooldown: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            idm: IdmParams {
                v0: 10.0,
                ..IdmParams::default()
            },
            mobil: MobilParams::default(),
            t_c: 2.0,
            lane_cooldown: 3.0,
        }
    }
}

/// Traffic-model advice for the ego at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpertAdvice {
    /// Center of the lane the ego is in; targets are offsets from it.
    pub frame_y: f64,
    pub target_lane: usize,
    /// IDM acceleration, the smaller of the current and target lanes.
    pub accel: f64,
}

/// IDM longitudinal and MOBIL lateral decisions for the ego, holding a
/// chosen lane until it is reached.
#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    pub config: ExpertConfig,
    target_lane: Option<usize>,
    last_change: f64,
}

impl ScriptedExpert {
    pub fn new(config: ExpertConfig) -> Self {
        Self {
            config,
            target_lane: None,
            last_change: f64::NEG_INFINITY,
        }
    }

    pub fn reset(&mut self) {
        self.target_lane = None;
        self.last_change = f64::NEG_INFINITY;
    }

    pub fn advise(&mut self, world: &WorldState) -> ExpertAdvice {
        let road = &world.road;
        let y = world.ego.pose.y;
        let lane = road.lane_index(y);
        let mut target = self.target_lane.unwrap_or(lane);
        if (y - road.lane_center(target)).abs() < LANE_REACHED {
            target = lane;
            let now = world.time();
            if now - self.last_change >= self.config.lane_cooldown {
                let choice = match ego_mobil(world, &self.config.idm, &self.config.mobil) {
                    LaneDecision::Keep => None,
                    LaneDecision::ChangeLeft => Some(lane + 1),
                    LaneDecision::ChangeRight => Some(lane - 1),
                };
                if let Some(t) = choice {
                    target = t;
                    self.last_change = now;
                }
            }
        }
        self.target_lane = Some(target);
        let accel = ego_idm_accel(world, lane, &self.config.idm).min(ego_idm_accel(world, target, &self.config.idm));
        ExpertAdvice {
            frame_y: road.lane_center(lane),
            target_lane: target,
            accel,
        }
    }

    /// Terminal target for the planner and the frame it is expressed in.
    pub fn target(&mut self, world: &WorldState) -> (MixedAction, f64) {
        let adv = self.advise(world);
        let v = world.ego.pose.v + adv.accel * self.config.t_c;
        let a = MixedAction {
            v_f: v.clamp(0.0, world.limits.v_max),
            d_f: world.road.lane_center(adv.target_lane) - adv.frame_y,
        };
        (a, adv.frame_y)
    }
}

#[derive(Clone, Debug)]
pub struct DemoEpisode {
    pub session: DemoSession,
    pub status: EpisodeStatus,
    pub steps: usize,
    pub episode_return: f64,
}

/// Drive one episode with the expert through the planner, recording the
/// state before every step and the final state.
pub fn run_expert_episode(
    scenario: &ScenarioConfig,
    seed: u64,
    expert: &ExpertConfig,
    planner: &PlannerConfig,
) -> Result<DemoEpisode> {
    let mut env = DrivingEnv::new(scenario.clone(), seed)?;
    let mut ex = ScriptedExpert::new(expert.clone());
    let mut warm: Option<PlannerSolution> = None;
    let w = &env.world;
    let mut header = DemoHeader::new(w.dt, w.road.clone(), w.ego.geometry, w.limits, "scripted-expert");
    header.seed = Some(seed);
    let mut records = Vec::new();
    let mut ret = 0.0;
    loop {
        records.push(DemonstrationRecord::new(env.world.time(), &env.obs, env.world.ego.pose));
        if env.status.is_terminal() {
            break;
        }
        let (a, frame) = ex.target(&env.world);
        let step = rho_step(&env.world, &a, frame, planner, &mut warm)?;
        ret += env.step(step.control)?.reward.total;
    }
    Ok(DemoEpisode {
        steps: records.len() - 1,
        session: DemoSession { header, records },
        status: env.status,
        episode_return: ret,
    })
}

/// Expert episodes for every seed; collided episodes are dropped and
/// counted.
pub fn collect_demonstrations(
    scenario: &ScenarioConfig,
    seeds: &[u64],
    expert: &ExpertConfig,
    planner: &PlannerConfig,
) -> Result<(Vec<DemoEpisode>, usize)> {
    let mut kept = Vec::new();
    let mut dropped = 0;
    for &seed in seeds {
        let ep = run_expert_episode(scenario, seed, expert, planner)?;
        if ep.status == EpisodeStatus::Collided || ep.steps == 0 {
            log::warn!("expert episode {seed} ended {:?} after {} steps; skipped", ep.status, ep.steps);
            dropped += 1;
        } else {
            kept.push(ep);
        }
    }
    Ok((kept, dropped))
}
