//! Mixed-policy soft actor-critic: the actor emits an additional policy, a
//! mixing proportion and a discretization factor; the mixed terminal target
//! is snapped to a discrete lateral grid before planning.

mod actor;
mod critic;
mod mixing;
mod replay;
mod rollout;
mod sac;

pub use actor::{
    log_squash_jacobian, squashed_log_prob, ActionRanges, Actor, ActorConfig, ActorMode, ActorOutput, ActorSample,
    ACTION_DIM, A_TILDE_DIM, LOG_STD_MAX, LOG_STD_MIN,
};
pub use critic::CriticPair;
pub use mixing::{discretize_levels, lateral_bounds, mix_policy, snap_lateral, KAPPA, SIGMA, TARGET_EDGE_MARGIN};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use rollout::{collect_rollout, episode_seed, ActionSource, Collector, EpisodeStats, RolloutChunk, StepRecord};
pub use sac::{Sac, SacConfig, SacLosses};

use serde::{Deserialize, Serialize};

/// Constants of `n = ⌊κ·η + σ⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixingConfig {
    pub kappa: f64,
    pub sigma: f64,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self {
            kappa: KAPPA,
            sigma: SIGMA,
        }
    }
}

/// Width of the actor and critic state: observation plus normalized ã.
pub const STATE_DIM: usize = crate::obs::OBS_DIM + A_TILDE_DIM;
