//! Receding-horizon planner: turns a terminal target into a rate-limited,
//! collision-checked control sequence for the kinematic bicycle model.

mod corridor;
mod quintic;
mod reference;
mod solver;

pub use corridor::{extract_corridor, Obstacle};
pub use quintic::{fit_quintic, quintic_residual, QuinticProfile};
pub use reference::{build_reference, RefPose, ReferenceTrajectory};
pub use solver::{solve_rho, SolveStart};

use serde::{Deserialize, Serialize};

use crate::sim::{ControlInput, VehicleGeometry, VehicleLimits, VehiclePose, WorldState};

/// Terminal target handed to the planner: speed and lateral offset from the
/// frame centerline after the prediction horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedAction {
    pub v_f: f64,
    pub d_f: f64,
}

/// Control change limits per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateBounds {
    pub accel: f64,
    pub steer_rate: f64,
}

impl Default for RateBounds {
    fn default() -> Self {
        Self {
            accel: 10.0,
            steer_rate: 1.0,
        }
    }
}

impl RateBounds {
    /// Largest change of (v_cmd, δ_f) between consecutive steps.
    pub fn per_step(&self, dt: f64) -> (f64, f64) {
        (self.accel * dt, self.steer_rate * dt)
    }

    /// Move `u` toward `target` within the per-step bounds and the box.
    pub fn limit(&self, prev: &ControlInput, target: &ControlInput, dt: f64, limits: &VehicleLimits) -> ControlInput {
        let (dv, dd) = self.per_step(dt);
        ControlInput::new(
            target.v_cmd.clamp(prev.v_cmd - dv, prev.v_cmd + dv),
            target.delta_f.clamp(prev.delta_f - dd, prev.delta_f + dd),
        )
        .clamped(limits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub n_p: usize,
    pub n_c: usize,
    /// Terminal weights on (x, y, φ).
    pub q: [f64; 3],
    /// Weights on deviation from the reference feedforward control.
    pub r_u: [f64; 2],
    pub r_du: [f64; 2],
    pub rates: RateBounds,
    pub mu0: f64,
    pub mu_growth: f64,
    pub rounds: usize,
    pub max_iters: usize,
    /// Feasibility tolerance on the largest constraint violation (m).
    pub eps_con: f64,
    /// Extra clearance used while optimizing, absent when checking.
    pub tighten: f64,
    /// Longitudinal safety buffer around every obstacle (m).
    pub long_buffer: f64,
    /// Clearance kept from the road edges (m).
    pub road_margin: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_p: 20,
            n_c: 10,
            q: [1.0, 5.0, 10.0],
            r_u: [0.01, 0.1],
            r_du: [0.1, 1.0],
            rates: RateBounds::default(),
            mu0: 100.0,
            mu_growth: 10.0,
            rounds: 3,
            max_iters: 60,
            eps_con: 1e-3,
            tighten: 0.1,
            long_buffer: 1.0,
            road_margin: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerProblem {
    pub pose: VehiclePose,
    pub prev_control: ControlInput,
    pub reference: ReferenceTrajectory,
    pub config: PlannerConfig,
    pub dt: f64,
    pub geometry: VehicleGeometry,
    pub limits: VehicleLimits,
    pub obstacles: Vec<Obstacle>,
    /// Right and left road edges.
    pub road: (f64, f64),
}

impl PlannerProblem {
    /// Problem for steering the ego of `world` toward `a` in the lateral
    /// frame centered on `frame_y`.
    pub fn from_world(world: &WorldState, a: &MixedAction, frame_y: f64, config: &PlannerConfig) -> Self {
        let e = &world.ego;
        let reference = build_reference(
            &e.pose,
            a,
            frame_y,
            config.n_p,
            world.dt,
            e.geometry.wheelbase,
            &world.limits,
        );
        Self {
            pose: e.pose,
            prev_control: e.last_control,
            reference,
            config: config.clone(),
            dt: world.dt,
            geometry: e.geometry,
            limits: world.limits,
            obstacles: extract_corridor(world, config.n_p),
            road: (world.road.right_boundary(), world.road.left_boundary()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSolution {
    /// `n_c` controls; the last one is held to the end of the horizon.
    pub controls: Vec<ControlInput>,
    /// `n_p` poses from forward-simulating `controls`.
    pub predicted: Vec<VehiclePose>,
    /// Tracking and control cost, without constraint penalties.
    pub cost: f64,
    pub feasible: bool,
    pub max_violation: f64,
    pub iterations: usize,
    pub start: SolveStart,
}

impl PlannerSolution {
    pub fn first(&self) -> ControlInput {
        self.controls[0]
    }
}

/// Outcome of one receding-horizon step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoStep {
    pub control: ControlInput,
    pub feasible: bool,
    /// The fallback stop replaced the planner's control.
    pub fallback: bool,
    pub max_violation: f64,
    pub cost: f64,
    pub iterations: usize,
}

/// Plan toward `target` in the frame centered on `frame_y` and return the
/// first control, or [`fallback_stop`] when no feasible plan exists. `warm`
/// carries the previous solution between calls.
pub fn rho_step(
    world: &WorldState,
    target: &MixedAction,
    frame_y: f64,
    config: &PlannerConfig,
    warm: &mut Option<PlannerSolution>,
) -> crate::Result<RhoStep> {
    let problem = PlannerProblem::from_world(world, target, frame_y, config);
    let sol = solve_rho(&problem, warm.as_ref())?;
    let e = &world.ego;
    let control = if sol.feasible {
        sol.first()
    } else {
        log::debug!("step {}: planner infeasible (violation {:.3}), fallback stop", world.step, sol.max_violation);
        fallback_stop(&e.pose, &e.last_control, frame_y, &config.rates, world.dt, &world.limits)
    };
    let out = RhoStep {
        control,
        feasible: sol.feasible,
        fallback: !sol.feasible,
        max_violation: sol.max_violation,
        cost: sol.cost,
        iterations: sol.iterations,
    };
    *warm = Some(sol);
    Ok(out)
}

/// Safety backstop: brake at the maximum rate and steer back toward the lane
/// center, within the rate bounds.
pub fn fallback_stop(
    pose: &VehiclePose,
    prev: &ControlInput,
    lane_center_y: f64,
    rates: &RateBounds,
    dt: f64,
    limits: &VehicleLimits,
) -> ControlInput {
    let (dv, _) = rates.per_step(dt);
    let v_cmd = (pose.v - dv).max(0.0);
    let steer = (-0.3 * (pose.y - lane_center_y) - 1.0 * pose.phi).clamp(-limits.delta_max, limits.delta_max);
    let target = ControlInput::new(v_cmd, steer);
    let mut u = rates.limit(prev, &target, dt, limits);
    u.v_cmd = v_cmd.max(0.0);
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_brakes_at_max_rate() {
        let rates = RateBounds::default();
        let lim = VehicleLimits::default();
        let mut pose = VehiclePose::new(0.0, 0.5, 0.0, 10.0);
        let mut prev = ControlInput::new(10.0, 0.0);
        let u = fallback_stop(&pose, &prev, 0.0, &rates, 0.1, &lim);
        assert!((u.v_cmd - 9.0).abs() < 1e-12);
        assert!(u.delta_f < 0.0 && u.delta_f >= -0.1);
        let mut steps = 0;
        while pose.v > 0.0 {
            let u = fallback_stop(&pose, &prev, 0.0, &rates, 0.1, &lim);
            assert!((u.delta_f - prev.delta_f).abs() <= 0.1 + 1e-12);
            pose = crate::sim::step_bicycle(&pose, &u, 0.1, 2.7);
            prev = u;
            steps += 1;
        }
        assert_eq!(steps, (10.0_f64 / 1.0).ceil() as usize);
    }

    #[test]
    fn fallback_at_rest_stays_at_rest() {
        let pose = VehiclePose::new(0.0, 0.0, 0.0, 0.0);
        let u = fallback_stop(&pose, &ControlInput::default(), 0.0, &RateBounds::default(), 0.1, &VehicleLimits::default());
        assert_eq!(u.v_cmd, 0.0);
    }

    #[test]
    fn fractional_speed_stops_in_ceil_steps() {
        let rates = RateBounds::default();
        let lim = VehicleLimits::default();
        let mut pose = VehiclePose::new(0.0, 0.0, 0.0, 4.3);
        let mut prev = ControlInput::new(4.3, 0.0);
        let mut steps = 0;
        while pose.v > 0.0 {
            let u = fallback_stop(&pose, &prev, 0.0, &rates, 0.1, &lim);
            pose = crate::sim::step_bicycle(&pose, &u, 0.1, 2.7);
            prev = u;
            steps += 1;
        }
        assert_eq!(steps, 5);
    }
}
