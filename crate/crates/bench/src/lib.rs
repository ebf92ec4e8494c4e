//! Benchmark fixtures shared by the criterion targets.

use evodrive_core::harness::{AgentVariant, DrivingEnv, RunConfig};
use evodrive_core::sim::WorldState;

/// A default-scenario world advanced `steps` steps at constant speed, so
/// that traffic and pedestrians are spread around the ego.
pub fn busy_world(seed: u64, steps: usize) -> WorldState {
    let cfg = RunConfig::for_variant(AgentVariant::RuleBased, seed);
    let mut env = DrivingEnv::new(cfg.scenario, seed).expect("default scenario is valid");
    for _ in 0..steps {
        let mut u = env.world.ego.last_control;
        u.v_cmd = 8.0;
        u.delta_f = 0.0;
        if env.step(u).expect("stepping").status.is_terminal() {
            break;
        }
    }
    env.world
}
