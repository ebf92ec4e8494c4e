use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{ray_disc, ray_hline, ray_rect, rect_disc_overlap, rects_overlap, OrientedRect};
use super::traffic::{idm_accel, mobil_decide, IdmParams, LaneCandidate, LaneDecision, MobilNeighbors, MobilParams};
use super::{step_bicycle, ControlInput, RoadMap, VehicleGeometry, VehicleLimits, VehiclePose};

/// Lateral speed cap during a traffic lane change (m/s).
const LANE_CHANGE_SPEED: f64 = 1.0;
const LANE_CHANGE_GAIN: f64 = 2.0;
/// Minimum time between lane changes of one vehicle (s).
const LANE_CHANGE_COOLDOWN: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub beams: usize,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 240,
            max_range: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleBehavior {
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub target_lane: usize,
    /// Time of the last completed or started lane change.
    pub last_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedestrianBehavior {
    pub y_from: f64,
    pub y_to: f64,
    pub speed: f64,
    pub start_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Vehicle(VehicleBehavior),
    Pedestrian(PedestrianBehavior),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Vehicle,
    Pedestrian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficActor {
    pub id: u32,
    pub pose: VehiclePose,
    /// Pedestrians are discs of diameter `geometry.width`.
    pub geometry: VehicleGeometry,
    pub behavior: Behavior,
}

impl TrafficActor {
    pub fn kind(&self) -> ActorKind {
        match self.behavior {
            Behavior::Vehicle(_) => ActorKind::Vehicle,
            Behavior::Pedestrian(_) => ActorKind::Pedestrian,
        }
    }

    pub fn rect(&self) -> OrientedRect {
        OrientedRect::new(
            self.pose.x,
            self.pose.y,
            self.pose.phi,
            self.geometry.length,
            self.geometry.width,
        )
    }

    /// Extent along x and y used for lane occupancy and gaps.
    fn extent(&self) -> (f64, f64) {
        match self.kind() {
            ActorKind::Pedestrian => (self.geometry.width, self.geometry.width),
            ActorKind::Vehicle => (self.geometry.length, self.geometry.width),
        }
    }
}

pub fn pedestrian_geometry(diameter: f64) -> VehicleGeometry {
    VehicleGeometry {
        wheelbase: diameter / 2.0,
        width: diameter,
        length: diameter,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: VehiclePose,
    pub geometry: VehicleGeometry,
    /// Control applied on the most recent step.
    pub last_control: ControlInput,
    /// Heading before the most recent step.
    pub prev_phi: f64,
}

impl EgoState {
    pub fn rect(&self) -> OrientedRect {
        OrientedRect::new(
            self.pose.x,
            self.pose.y,
            self.pose.phi,
            self.geometry.length,
            self.geometry.width,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "with", content = "id")]
pub enum Collision {
    Actor(u32),
    RoadBoundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub step: u64,
    pub dt: f64,
    pub ego: EgoState,
    pub actors: Vec<TrafficActor>,
    pub road: RoadMap,
    pub limits: VehicleLimits,
    pub lidar: LidarConfig,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    next_id: u32,
}

impl WorldState {
    /// A world with only the ego vehicle.
    pub fn empty(road: RoadMap, ego_pose: VehiclePose, seed: u64) -> Self {
        Self {
            step: 0,
            dt: 0.1,
            ego: EgoState {
                pose: ego_pose,
                geometry: VehicleGeometry::car(),
                last_control: ControlInput::new(ego_pose.v, 0.0),
                prev_phi: ego_pose.phi,
            },
            actors: Vec::new(),
            road,
            limits: VehicleLimits::default(),
            lidar: LidarConfig::default(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 1,
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn add_vehicle(&mut self, lane: usize, x: f64, speed: f64, idm: IdmParams, mobil: MobilParams) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        let y = self.road.lane_center(lane);
        self.actors.push(TrafficActor {
            id,
            pose: VehiclePose::new(x, y, 0.0, speed),
            geometry: VehicleGeometry::car(),
            behavior: Behavior::Vehicle(VehicleBehavior {
                idm,
                mobil,
                target_lane: lane,
                last_change: f64::NEG_INFINITY,
            }),
        });
        id
    }

    pub fn add_pedestrian(&mut self, x: f64, diameter: f64, behavior: PedestrianBehavior) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        let phi = if behavior.y_to > behavior.y_from { PI / 2.0 } else { -PI / 2.0 };
        self.actors.push(TrafficActor {
            id,
            pose: VehiclePose::new(x, behavior.y_from, phi, 0.0),
            geometry: pedestrian_geometry(diameter),
            behavior: Behavior::Pedestrian(behavior),
        });
        id
    }

    pub fn actor(&self, id: u32) -> Option<&TrafficActor> {
        self.actors.iter().find(|a| a.id == id)
    }
}

/// Longitudinal/lateral footprint of one road user for car-following.
#[derive(Clone, Copy)]
struct Body {
    x: f64,
    y: f64,
    v: f64,
    length: f64,
    width: f64,
    /// Whether the body follows IDM (and thus counts as a follower).
    drives: bool,
}

impl Body {
    fn overlaps(&self, (lo, hi): (f64, f64)) -> bool {
        self.y + self.width / 2.0 > lo && self.y - self.width / 2.0 < hi
    }
}

fn bodies(world: &WorldState) -> Vec<Body> {
    let e = &world.ego;
    let mut out = vec![Body {
        x: e.pose.x,
        y: e.pose.y,
        v: e.pose.v,
        length: e.geometry.length,
        width: e.geometry.width,
        drives: true,
    }];
    out.extend(world.actors.iter().map(|a| {
        let (length, width) = a.extent();
        Body {
            x: a.pose.x,
            y: a.pose.y,
            v: a.pose.v,
            length,
            width,
            drives: a.kind() == ActorKind::Vehicle,
        }
    }));
    out
}

/// Nearest body strictly ahead of `me` occupying `span`, as (index, gap).
fn leader(bs: &[Body], me: usize, span: (f64, f64), skip: Option<usize>) -> Option<(usize, f64)> {
    let m = bs[me];
    bs.iter()
        .enumerate()
        .filter(|&(i, b)| i != me && Some(i) != skip && b.x > m.x && b.overlaps(span))
        .map(|(i, b)| (i, (b.x - b.length / 2.0) - (m.x + m.length / 2.0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Nearest driving body strictly behind `me` occupying `span`.
fn follower(bs: &[Body], me: usize, span: (f64, f64)) -> Option<(usize, f64)> {
    let m = bs[me];
    bs.iter()
        .enumerate()
        .filter(|&(i, b)| i != me && b.drives && b.x < m.x && b.overlaps(span))
        .map(|(i, b)| (i, (m.x - m.length / 2.0) - (b.x + b.length / 2.0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn accel_behind(bs: &[Body], me: usize, lead: Option<(usize, f64)>, idm: &IdmParams) -> f64 {
    idm_accel(bs[me].v, lead.map(|(i, gap)| (bs[i].v, gap)), idm)
}

fn mobil_for(world: &WorldState, bs: &[Body], me: usize, params: (&IdmParams, &MobilParams)) -> LaneDecision {
    let (idm, mobil) = params;
    let road = &world.road;
    let lane = road.lane_index(bs[me].y);
    let span = road.lane_span(lane);
    let default_idm = IdmParams::default();
    let idm_of = |i: usize| -> IdmParams {
        if i == 0 {
            default_idm
        } else {
            match &world.actors[i - 1].behavior {
                Behavior::Vehicle(vb) => vb.idm,
                Behavior::Pedestrian(_) => default_idm,
            }
        }
    };
    let cur_lead = leader(bs, me, span, None);
    let own_current = accel_behind(bs, me, cur_lead, idm);
    let (old_before, old_after) = match follower(bs, me, span) {
        Some((o, gap)) => {
            let p = idm_of(o);
            let before = accel_behind(bs, o, Some((me, gap)), &p);
            let after = accel_behind(bs, o, leader(bs, o, span, Some(me)), &p);
            (before, after)
        }
        None => (0.0, 0.0),
    };
    let candidate = |target: usize| -> Option<LaneCandidate> {
        let tspan = road.lane_span(target);
        let new_lead = leader(bs, me, tspan, None);
        if new_lead.is_some_and(|(_, g)| g <= 0.0) {
            return None;
        }
        let own = accel_behind(bs, me, new_lead, idm);
        let (follower_before, follower_after) = match follower(bs, me, tspan) {
            Some((_, g)) if g <= 0.0 => return None,
            Some((n, g)) => {
                let p = idm_of(n);
                let before = accel_behind(bs, n, leader(bs, n, tspan, Some(me)), &p);
                (before, accel_behind(bs, n, Some((me, g)), &p))
            }
            None => (0.0, 0.0),
        };
        Some(LaneCandidate {
            own,
            follower_before,
            follower_after,
        })
    };
    let neighbors = MobilNeighbors {
        own_current,
        old_follower_before: old_before,
        old_follower_after: old_after,
        left: (lane + 1 < road.lane_count).then(|| candidate(lane + 1)).flatten(),
        right: (lane > 0).then(|| candidate(lane - 1)).flatten(),
    };
    mobil_decide(mobil, &neighbors)
}

/// IDM acceleration of the ego behind the nearest body in `lane`.
pub fn ego_idm_accel(world: &WorldState, lane: usize, idm: &IdmParams) -> f64 {
    let bs = bodies(world);
    accel_behind(&bs, 0, leader(&bs, 0, world.road.lane_span(lane), None), idm)
}

/// MOBIL lane decision for the ego as if it were a traffic vehicle.
pub fn ego_mobil(world: &WorldState, idm: &IdmParams, mobil: &MobilParams) -> LaneDecision {
    let bs = bodies(world);
    mobil_for(world, &bs, 0, (idm, mobil))
}

/// Advance the world by one sampling interval.
pub fn step_world(world: &mut WorldState, ego_u: ControlInput) {
    let dt = world.dt;
    let now = world.time();
    let bs = bodies(world);
    let road = world.road.clone();

    // Decisions read only the pre-step snapshot.
    let mut updates: Vec<(f64, Option<usize>)> = Vec::with_capacity(world.actors.len());
    for (k, actor) in world.actors.iter().enumerate() {
        let me = k + 1;
        let Behavior::Vehicle(vb) = &actor.behavior else {
            updates.push((0.0, None));
            continue;
        };
        let current = road.lane_index(actor.pose.y);
        let changing = (actor.pose.y - road.lane_center(vb.target_lane)).abs() > 0.05;
        let mut lanes = vec![current];
        if vb.target_lane != current {
            lanes.push(vb.target_lane);
        }
        let accel = lanes
            .iter()
            .map(|&l| accel_behind(&bs, me, leader(&bs, me, road.lane_span(l), None), &vb.idm))
            .fold(f64::INFINITY, f64::min);
        let mut new_target = None;
        if !changing && now - vb.last_change >= LANE_CHANGE_COOLDOWN {
            new_target = match mobil_for(world, &bs, me, (&vb.idm, &vb.mobil)) {
                LaneDecision::Keep => None,
                LaneDecision::ChangeLeft => Some(current + 1),
                LaneDecision::ChangeRight => Some(current - 1),
            };
        }
        updates.push((accel, new_target));
    }

    let u = ego_u.clamped(&world.limits);
    world.ego.prev_phi = world.ego.pose.phi;
    world.ego.pose = step_bicycle(&world.ego.pose, &u, dt, world.ego.geometry.wheelbase);
    world.ego.last_control = u;

    for (actor, (accel, new_target)) in world.actors.iter_mut().zip(updates) {
        match &mut actor.behavior {
            Behavior::Vehicle(vb) => {
                if let Some(t) = new_target {
                    vb.target_lane = t;
                    vb.last_change = now;
                }
                let v = (actor.pose.v + accel * dt).max(0.0);
                let ty = road.lane_center(vb.target_lane);
                let vy = (LANE_CHANGE_GAIN * (ty - actor.pose.y)).clamp(-LANE_CHANGE_SPEED, LANE_CHANGE_SPEED);
                let vy = if v > 0.5 { vy } else { 0.0 };
                actor.pose.x += v * dt;
                actor.pose.y += vy * dt;
                if (actor.pose.y - ty).abs() < 0.01 {
                    actor.pose.y = ty;
                }
                actor.pose.phi = if v > 0.0 { vy.atan2(v) } else { 0.0 };
                actor.pose.v = v;
            }
            Behavior::Pedestrian(pb) => {
                let walking = now + 1e-9 >= pb.start_time && actor.pose.y != pb.y_to;
                if walking {
                    let dir = (pb.y_to - pb.y_from).signum();
                    let y = actor.pose.y + dir * pb.speed * dt;
                    actor.pose.y = if dir > 0.0 { y.min(pb.y_to) } else { y.max(pb.y_to) };
                    actor.pose.v = pb.speed;
                } else {
                    actor.pose.v = 0.0;
                }
            }
        }
    }
    world.actors.retain(|a| a.pose.x - a.geometry.length < road.length + 50.0);
    world.step += 1;
}

/// First collision of the ego with an actor or a road boundary. Touching
/// counts as a collision.
pub fn detect_collision(world: &WorldState) -> Option<Collision> {
    let ego = world.ego.rect();
    for a in &world.actors {
        let hit = match a.kind() {
            ActorKind::Vehicle => rects_overlap(&ego, &a.rect()),
            ActorKind::Pedestrian => rect_disc_overlap(&ego, a.pose.x, a.pose.y, a.geometry.width / 2.0),
        };
        if hit {
            return Some(Collision::Actor(a.id));
        }
    }
    let hw = world.road.half_width();
    if ego.corners().iter().any(|&(_, y)| y.abs() >= hw) {
        return Some(Collision::RoadBoundary);
    }
    None
}

/// Normalized lidar ranges; beam `i` points at ego-frame angle `−2πi/n`.
pub fn cast_lidar(world: &WorldState, n_beams: usize, max_range: f64) -> Vec<f64> {
    assert!(n_beams >= 1, "lidar needs at least one beam");
    let p = &world.ego.pose;
    let (ox, oy) = (p.x, p.y);
    let near: Vec<&TrafficActor> = world
        .actors
        .iter()
        .filter(|a| {
            let reach = max_range + a.rect().bounding_radius();
            (a.pose.x - ox).powi(2) + (a.pose.y - oy).powi(2) <= reach * reach
        })
        .collect();
    let hw = world.road.half_width();
    (0..n_beams)
        .map(|i| {
            let ang = p.phi - 2.0 * PI * i as f64 / n_beams as f64;
            let (dy, dx) = ang.sin_cos();
            let mut best = max_range;
            for line in [hw, -hw] {
                if let Some(t) = ray_hline(oy, dy, line) {
                    best = best.min(t);
                }
            }
            for a in &near {
                let t = match a.kind() {
                    ActorKind::Vehicle => ray_rect(ox, oy, dx, dy, &a.rect()),
                    ActorKind::Pedestrian => ray_disc(ox, oy, dx, dy, a.pose.x, a.pose.y, a.geometry.width / 2.0),
                };
                if let Some(t) = t {
                    best = best.min(t);
                }
            }
            (best / max_range).clamp(0.0, 1.0)
        })
        .collect()
}
