//! Scenario files and seeded world construction.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::traffic::{IdmParams, MobilParams};
use super::world::{LidarConfig, PedestrianBehavior, WorldState};
use super::{RoadMap, VehicleGeometry, VehicleLimits, VehiclePose};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoSpawn {
    pub x: f64,
    pub lane: usize,
    pub speed: f64,
    pub geometry: VehicleGeometry,
}

impl Default for EgoSpawn {
    fn default() -> Self {
        Self {
            x: 20.0,
            lane: 1,
            speed: 0.0,
            geometry: VehicleGeometry::car(),
        }
    }
}

/// A fixed traffic vehicle. `v0` defaults to the scenario IDM default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpawn {
    pub lane: usize,
    pub x: f64,
    pub speed: f64,
    pub v0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSpawn {
    /// Randomly placed vehicles in addition to `vehicles`.
    pub count: usize,
    pub x_range: [f64; 2],
    pub v0_range: [f64; 2],
    /// Initial speed as a fraction of `v0`.
    pub speed_fraction: [f64; 2],
    /// Minimum bumper-to-bumper spacing in one lane.
    pub min_spacing: f64,
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub vehicles: Vec<VehicleSpawn>,
}

impl Default for TrafficSpawn {
    fn default() -> Self {
        Self {
            count: 7,
            x_range: [45.0, 400.0],
            v0_range: [4.0, 10.0],
            speed_fraction: [0.6, 1.0],
            min_spacing: 15.0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
            vehicles: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PedestrianSpawn {
    pub count: usize,
    pub x_range: [f64; 2],
    pub speed_range: [f64; 2],
    pub diameter: f64,
    /// Distance of the waiting position beyond the road edge.
    pub curb_offset: f64,
    /// Nominal ego speed used to time crossings against the ego's arrival.
    pub arrival_speed: f64,
    /// Fraction of the crossing completed when the ego nominally arrives.
    pub progress_at_arrival: [f64; 2],
}

impl Default for PedestrianSpawn {
    fn default() -> Self {
        Self {
            count: 3,
            x_range: [80.0, 400.0],
            speed_range: [0.8, 2.0],
            diameter: 0.6,
            curb_offset: 1.0,
            arrival_speed: 8.0,
            progress_at_arrival: [0.15, 0.85],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub dt: f64,
    pub max_steps: u64,
    pub road: RoadMap,
    pub limits: VehicleLimits,
    pub lidar: LidarConfig,
    pub ego: EgoSpawn,
    pub traffic: TrafficSpawn,
    pub pedestrians: PedestrianSpawn,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: 0.1,
            max_steps: 280,
            // 500 m of route cannot be covered in 28 s even at v_max, so
            // the return measures progress rather than saturating on arrival
            road: RoadMap {
                length: 530.0,
                destination_x: 520.0,
                ..RoadMap::default()
            },
            limits: VehicleLimits::default(),
            lidar: LidarConfig::default(),
            ego: EgoSpawn::default(),
            traffic: TrafficSpawn::default(),
            pedestrians: PedestrianSpawn::default(),
        }
    }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    check(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite(), format!("{name}: empty or non-finite range {r:?}"))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.road;
        check(r.lane_count >= 1, "road.lane_count must be at least 1")?;
        check(r.lane_width > 0.0, "road.lane_width must be positive")?;
        check(r.length > 0.0, "road.length must be positive")?;
        check(
            r.destination_x > self.ego.x && r.destination_x <= r.length,
            "road.destination_x must lie between the ego start and the road end",
        )?;
        check(self.dt > 0.0, "dt must be positive")?;
        check(self.max_steps > 0, "max_steps must be positive")?;
        check(self.lidar.beams >= 1 && self.lidar.max_range > 0.0, "lidar needs beams ≥ 1 and positive range")?;
        check(self.ego.lane < r.lane_count, format!("ego.lane {} out of range", self.ego.lane))?;
        check(
            self.limits.v_max > 0.0 && self.limits.delta_max > 0.0,
            "limits must be positive",
        )?;
        let g = self.ego.geometry;
        check(
            g.wheelbase > 0.0 && g.width > 0.0 && g.length > g.wheelbase,
            "ego.geometry must satisfy 0 < wheelbase < length and width > 0",
        )?;
        let t = &self.traffic;
        check_range("traffic.x_range", t.x_range)?;
        check_range("traffic.v0_range", t.v0_range)?;
        check_range("traffic.speed_fraction", t.speed_fraction)?;
        check(t.v0_range[0] > 0.0, "traffic.v0_range must be positive")?;
        for v in &t.vehicles {
            check(v.lane < r.lane_count, format!("traffic vehicle lane {} out of range", v.lane))?;
        }
        let p = &self.pedestrians;
        check_range("pedestrians.x_range", p.x_range)?;
        check_range("pedestrians.speed_range", p.speed_range)?;
        check(p.speed_range[0] > 0.0, "pedestrian speeds must be positive")?;
        check(p.diameter > 0.0, "pedestrians.diameter must be positive")?;
        check(p.arrival_speed > 0.0, "pedestrians.arrival_speed must be positive")?;
        Ok(())
    }

    /// Build the initial world for one episode seed.
    pub fn build_world(&self, seed: u64) -> WorldState {
        let lane_y = self.road.lane_center(self.ego.lane);
        let mut w = WorldState::empty(
            self.road.clone(),
            VehiclePose::new(self.ego.x, lane_y, 0.0, self.ego.speed),
            seed,
        );
        w.dt = self.dt;
        w.limits = self.limits;
        w.lidar = self.lidar;
        w.ego.geometry = self.ego.geometry;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let t = &self.traffic;
        let len = VehicleGeometry::car().length;
        let mut placed: Vec<(usize, f64)> = vec![(self.ego.lane, self.ego.x)];
        for v in &t.vehicles {
            let idm = IdmParams {
                v0: v.v0.unwrap_or(t.idm.v0),
                ..t.idm
            };
            w.add_vehicle(v.lane, v.x, v.speed, idm, t.mobil);
            placed.push((v.lane, v.x));
        }
        let mut attempts = 0;
        let mut added = 0;
        while added < t.count && attempts < 200 * t.count.max(1) {
            attempts += 1;
            let lane = rng.gen_range(0..self.road.lane_count);
            let x = uniform(&mut rng, t.x_range);
            let v0 = uniform(&mut rng, t.v0_range);
            let frac = uniform(&mut rng, t.speed_fraction);
            // the ego's own clearance spans every lane
            let clear = placed.iter().enumerate().all(|(k, &(l, px))| {
                let same_lane = l == lane || k == 0;
                !same_lane || (x - px).abs() >= t.min_spacing + len
            });
            if !clear {
                continue;
            }
            w.add_vehicle(lane, x, v0 * frac, IdmParams { v0, ..t.idm }, t.mobil);
            placed.push((lane, x));
            added += 1;
        }

        let p = &self.pedestrians;
        let edge = self.road.half_width() + p.curb_offset;
        for _ in 0..p.count {
            let x = uniform(&mut rng, p.x_range);
            let speed = uniform(&mut rng, p.speed_range);
            let from_right = rng.gen_bool(0.5);
            let (y_from, y_to) = if from_right { (-edge, edge) } else { (edge, -edge) };
            let crossing_time = 2.0 * edge / speed;
            let arrival = (x - self.ego.x).max(0.0) / p.arrival_speed;
            let progress = uniform(&mut rng, p.progress_at_arrival);
            let start_time = (arrival - progress * crossing_time).max(0.0);
            w.add_pedestrian(
                x,
                p.diameter,
                PedestrianBehavior {
                    y_from,
                    y_to,
                    speed,
                    start_time,
                },
            );
        }
        w.rng = rng;
        w
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}
