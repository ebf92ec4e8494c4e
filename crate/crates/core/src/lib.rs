//! Safety-oriented self-learning driving stack.
//!
//! A seeded 2D mixed-traffic world ([`sim`]), the 259-feature observation and
//! shaped reward ([`obs`]), a small reverse-mode autodiff engine ([`tensor`]),
//! a transformer basic model cloned from demonstrations ([`bc`]), a
//! mixed-policy soft actor-critic learner ([`policy`]), a receding-horizon
//! planner that turns terminal targets into safe controls ([`planner`]) and
//! the training/evaluation harness tying them together ([`harness`]).

pub mod bc;
pub mod error;
pub mod harness;
pub mod obs;
pub mod planner;
pub mod policy;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use obs::{Observation, RewardBreakdown, EpisodeStatus, OBS_DIM, OBS_SCHEMA};
pub use planner::{PlannerSolution, MixedAction};
pub use policy::{ActorOutput, Transition};
pub use sim::{ControlInput, VehicleGeometry, VehiclePose, WorldState};
