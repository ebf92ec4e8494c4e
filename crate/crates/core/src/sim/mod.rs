//! Seeded 2D driving world on a straight multi-lane road.

pub mod geometry;
mod road;
mod scenario;
pub mod traffic;
mod vehicle;
mod world;

pub use road::RoadMap;
pub use scenario::{EgoSpawn, PedestrianSpawn, ScenarioConfig, TrafficSpawn, VehicleSpawn};
pub use traffic::{idm_accel, mobil_decide, IdmParams, LaneDecision, MobilParams};
pub use vehicle::{normalize_angle, step_bicycle, ControlInput, VehicleGeometry, VehicleLimits, VehiclePose};
pub use world::{
    cast_lidar, detect_collision, ego_idm_accel, ego_mobil, pedestrian_geometry, step_world, ActorKind, Behavior, Collision, EgoState,
    LidarConfig, PedestrianBehavior, TrafficActor, VehicleBehavior, WorldState,
};
