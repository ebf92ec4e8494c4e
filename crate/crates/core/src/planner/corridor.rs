use serde::{Deserialize, Serialize};

use crate::sim::{ActorKind, TrafficActor, WorldState};

/// Axis-aligned envelope of one actor, extrapolated at constant velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub actor_id: u32,
    /// Rear-most corner x.
    pub x_obs: f64,
    pub l_obs: f64,
    pub w_obs: f64,
    /// Largest and smallest corner y.
    pub y_l: f64,
    pub y_r: f64,
    pub vx: f64,
    pub vy: f64,
}

impl Obstacle {
    pub fn from_actor(a: &TrafficActor) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = match a.kind() {
            ActorKind::Vehicle => a.rect().corners().into_iter().unzip(),
            ActorKind::Pedestrian => {
                let r = a.geometry.width / 2.0;
                (vec![a.pose.x - r, a.pose.x + r], vec![a.pose.y - r, a.pose.y + r])
            }
        };
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let x_obs = min(&xs);
        Self {
            actor_id: a.id,
            x_obs,
            l_obs: max(&xs) - x_obs,
            w_obs: a.geometry.width,
            y_l: max(&ys),
            y_r: min(&ys),
            vx: a.pose.v * a.pose.phi.cos(),
            vy: a.pose.v * a.pose.phi.sin(),
        }
    }

    /// Envelope `k` steps ahead as (x_obs, y_l, y_r).
    pub fn at(&self, k: usize, dt: f64) -> (f64, f64, f64) {
        let t = k as f64 * dt;
        (self.x_obs + self.vx * t, self.y_l + self.vy * t, self.y_r + self.vy * t)
    }
}

/// Actors the ego can reach within the horizon.
///
/// Actors entirely behind the ego that already share its lateral span are
/// left to their own car-following; everything else within reach is kept.
pub fn extract_corridor(world: &WorldState, n_p: usize) -> Vec<Obstacle> {
    let e = &world.ego;
    let horizon = n_p as f64 * world.dt;
    let ego_rect = e.rect();
    let ego_corners = ego_rect.corners();
    let ego_rear = ego_corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let ego_front = ego_corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let ego_lo = ego_corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let ego_hi = ego_corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let reach = world.limits.v_max * horizon + 5.0;
    world
        .actors
        .iter()
        .map(Obstacle::from_actor)
        .filter(|o| {
            let o_front = o.x_obs + o.l_obs;
            // relative reach, both parties at their fastest plausible motion
            let closing = reach + o.vx.abs() * horizon;
            if o.x_obs > ego_front + closing || o_front < ego_rear - closing {
                return false;
            }
            let behind = o_front < ego_rear;
            let same_span = o.y_l > ego_lo && o.y_r < ego_hi;
            !(behind && same_span)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{IdmParams, MobilParams, RoadMap, VehiclePose};

    fn world() -> WorldState {
        WorldState::empty(RoadMap::default(), VehiclePose::new(50.0, 0.0, 0.0, 10.0), 0)
    }

    #[test]
    fn empty_world_has_no_obstacles() {
        assert!(extract_corridor(&world(), 20).is_empty());
    }

    #[test]
    fn aligned_vehicle_envelope() {
        let mut w = world();
        w.add_vehicle(2, 70.0, 5.0, IdmParams::default(), MobilParams::default());
        let o = extract_corridor(&w, 20);
        assert_eq!(o.len(), 1);
        assert!((o[0].y_l - (3.5 + 0.9)).abs() < 1e-12);
        assert!((o[0].y_r - (3.5 - 0.9)).abs() < 1e-12);
        assert!((o[0].x_obs - (70.0 - 2.25)).abs() < 1e-12);
        assert!((o[0].vx - 5.0).abs() < 1e-12);
    }

    #[test]
    fn yawed_vehicle_matches_rotation_oracle() {
        let mut w = world();
        w.add_vehicle(1, 80.0, 0.0, IdmParams::default(), MobilParams::default());
        let phi = 30f64.to_radians();
        w.actors[0].pose.phi = phi;
        let o = Obstacle::from_actor(&w.actors[0]);
        let (hl, hw) = (2.25, 0.9);
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for (a, b) in [(hl, hw), (hl, -hw), (-hl, hw), (-hl, -hw)] {
            // R(φ)·(a, b)
            xs.push(80.0 + a * phi.cos() - b * phi.sin());
            ys.push(a * phi.sin() + b * phi.cos());
        }
        let ymax = ys.iter().cloned().fold(f64::MIN, f64::max);
        let ymin = ys.iter().cloned().fold(f64::MAX, f64::min);
        let xmin = xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((o.y_l - ymax).abs() < 1e-12);
        assert!((o.y_r - ymin).abs() < 1e-12);
        assert!((o.x_obs - xmin).abs() < 1e-12);
        assert!((ymax - (hl * 0.5 + hw * 3f64.sqrt() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn same_lane_follower_is_ignored_but_adjacent_one_kept() {
        let mut w = world();
        w.add_vehicle(1, 30.0, 12.0, IdmParams::default(), MobilParams::default());
        w.add_vehicle(2, 30.0, 12.0, IdmParams::default(), MobilParams::default());
        let o = extract_corridor(&w, 20);
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].actor_id, w.actors[1].id);
    }

    #[test]
    fn far_actors_are_dropped() {
        let mut w = world();
        w.add_vehicle(1, 300.0, 0.0, IdmParams::default(), MobilParams::default());
        assert!(extract_corridor(&w, 20).is_empty());
    }
}
