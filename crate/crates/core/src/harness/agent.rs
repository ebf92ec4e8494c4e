use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bc::{bc_infer, BasicModel, ExpertConfig, ScriptedExpert};
use crate::error::{Error, Result};
use crate::obs::Observation;
use crate::planner::{rho_step, MixedAction, PlannerConfig, PlannerSolution, RhoStep};
use crate::policy::{
    discretize_levels, lateral_bounds, mix_policy, snap_lateral, ActionRanges, ActorOutput, MixingConfig,
    A_TILDE_DIM,
};
use crate::sim::{ControlInput, WorldState};

/// Gain from lateral error to desired heading for the rule-based agent.
const RULE_LATERAL_GAIN: f64 = 0.25;
const RULE_HEADING_GAIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    /// Basic model mixed with the learned policy, executed by the planner.
    Proposed,
    /// Learned policy alone through the planner.
    RlRho,
    /// Basic model alone through the planner.
    BcRho,
    /// Learned policy emitting controls directly.
    RlDirect,
    /// IDM speed and MOBIL lane choice tracked by a feedback controller.
    RuleBased,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 5] = [
        AgentVariant::Proposed,
        AgentVariant::RlRho,
        AgentVariant::BcRho,
        AgentVariant::RlDirect,
        AgentVariant::RuleBased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentVariant::Proposed => "proposed",
            AgentVariant::RlRho => "rl_rho",
            AgentVariant::BcRho => "bc_rho",
            AgentVariant::RlDirect => "rl_direct",
            AgentVariant::RuleBased => "rule_based",
        }
    }

    pub fn uses_basic_model(self) -> bool {
        matches!(self, AgentVariant::Proposed | AgentVariant::BcRho)
    }

    pub fn uses_actor(self) -> bool {
        matches!(self, AgentVariant::Proposed | AgentVariant::RlRho | AgentVariant::RlDirect)
    }

    pub fn uses_planner(self) -> bool {
        matches!(self, AgentVariant::Proposed | AgentVariant::RlRho | AgentVariant::BcRho)
    }
}

impl fmt::Display for AgentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; expected one of proposed, rl_rho, bc_rho, rl_direct, rule_based")))
    }
}

/// How one control was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub a_tilde: MixedAction,
    pub actor: Option<ActorOutput>,
    /// Mixed action before discretization.
    pub a_pre: Option<MixedAction>,
    pub levels: Option<usize>,
    /// Terminal target handed to the planner.
    pub target: Option<MixedAction>,
    pub frame_y: f64,
    pub control: ControlInput,
    pub rho: Option<RhoStep>,
}

/// Mix, discretize and snap: `(a_pre, n, (v_f, δf_closest))`.
pub fn compose_target(
    a_tilde: &MixedAction,
    a: &MixedAction,
    lambda: f64,
    eta: f64,
    bounds: (f64, f64),
    v_max: f64,
    mixing: &MixingConfig,
) -> (MixedAction, usize, MixedAction) {
    let a_pre = mix_policy(a_tilde, a, lambda);
    let n = discretize_levels(eta, mixing.kappa, mixing.sigma);
    let target = MixedAction {
        v_f: a_pre.v_f.clamp(0.0, v_max),
        d_f: snap_lateral(a_pre.d_f, bounds.0, bounds.1, n),
    };
    (a_pre, n, target)
}

/// Per-episode executor of one variant's pipeline.
#[derive(Clone)]
pub struct Driver {
    pub variant: AgentVariant,
    pub planner: PlannerConfig,
    pub mixing: MixingConfig,
    pub ranges: ActionRanges,
    pub basic: Option<Arc<BasicModel>>,
    expert: ScriptedExpert,
    warm: Option<PlannerSolution>,
}

impl Driver {
    pub fn new(
        variant: AgentVariant,
        planner: PlannerConfig,
        mixing: MixingConfig,
        ranges: ActionRanges,
        basic: Option<Arc<BasicModel>>,
        expert: ExpertConfig,
    ) -> Result<Self> {
        if variant.uses_basic_model() && basic.is_none() {
            return Err(Error::Precondition(format!("variant {variant} needs a basic-model checkpoint")));
        }
        Ok(Self {
            variant,
            planner,
            mixing,
            ranges,
            basic: if variant.uses_basic_model() { basic } else { None },
            expert: ScriptedExpert::new(expert),
            warm: None,
        })
    }

    pub fn reset(&mut self) {
        self.warm = None;
        self.expert.reset();
    }

    /// Center of the ego's current lane and the admissible target offsets.
    pub fn frame(world: &WorldState) -> (f64, (f64, f64)) {
        let road = &world.road;
        let frame = road.lane_center(road.lane_index(world.ego.pose.y));
        (frame, lateral_bounds(road, frame, world.ego.geometry.width))
    }

    /// Basic-model action, or zero for variants without one.
    pub fn basic_action(&self, world: &WorldState, obs: &Observation) -> MixedAction {
        match &self.basic {
            Some(m) => bc_infer(m, &obs.to_vec(), world.limits.v_max, Self::frame(world).1),
            None => MixedAction { v_f: 0.0, d_f: 0.0 },
        }
    }

    /// Actor and critic input: observation followed by the normalized ã.
    pub fn actor_input(&self, obs: &Observation, a_tilde: &MixedAction) -> Vec<f64> {
        let mut x = obs.to_vec();
        x.extend(self.ranges.normalize(a_tilde));
        debug_assert_eq!(x.len(), crate::obs::OBS_DIM + A_TILDE_DIM);
        x
    }

    /// Produce the control for `world` given the basic-model action and,
    /// for learned variants, the actor output.
    pub fn execute(&mut self, world: &WorldState, a_tilde: &MixedAction, actor: Option<&ActorOutput>) -> Result<StepPlan> {
        let (frame_y, bounds) = Self::frame(world);
        let v_max = world.limits.v_max;
        let need_actor = || {
            actor.copied().ok_or_else(|| Error::Precondition(format!("variant {} needs an actor output", self.variant)))
        };
        let mut plan = StepPlan {
            a_tilde: *a_tilde,
            actor: actor.copied(),
            a_pre: None,
            levels: None,
            target: None,
            frame_y,
            control: ControlInput::default(),
            rho: None,
        };
        let composed = match self.variant {
            AgentVariant::Proposed => {
                let o = need_actor()?;
                Some(compose_target(a_tilde, &o.a, o.lambda, o.eta, bounds, v_max, &self.mixing))
            }
            AgentVariant::RlRho => {
                let o = need_actor()?;
                let zero = MixedAction { v_f: 0.0, d_f: 0.0 };
                Some(compose_target(&zero, &o.a, 1.0, o.eta, bounds, v_max, &self.mixing))
            }
            AgentVariant::BcRho => Some(compose_target(a_tilde, a_tilde, 0.0, 1.0, bounds, v_max, &self.mixing)),
            AgentVariant::RlDirect => {
                let y = need_actor()?.squashed();
                plan.control = ControlInput::new(0.5 * (y[0] + 1.0) * v_max, y[1] * world.limits.delta_max);
                None
            }
            AgentVariant::RuleBased => {
                plan.control = self.rule_control(world);
                None
            }
        };
        if let Some((a_pre, n, target)) = composed {
            let step = rho_step(world, &target, frame_y, &self.planner, &mut self.warm)?;
            plan.a_pre = Some(a_pre);
            plan.levels = Some(n);
            plan.target = Some(target);
            plan.control = step.control;
            plan.rho = Some(step);
        }
        Ok(plan)
    }

    fn rule_control(&mut self, world: &WorldState) -> ControlInput {
        let adv = self.expert.advise(world);
        let p = world.ego.pose;
        let dt = world.dt;
        let v_cmd = (p.v + adv.accel * dt).clamp(0.0, world.limits.v_max);
        let err = world.road.lane_center(adv.target_lane) - p.y;
        let heading = (RULE_LATERAL_GAIN * err).atan();
        let steer = RULE_HEADING_GAIN * crate::sim::normalize_angle(heading - p.phi);
        self.planner
            .rates
            .limit(&world.ego.last_control, &ControlInput::new(v_cmd, steer), dt, &world.limits)
    }
}
