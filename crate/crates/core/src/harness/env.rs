use crate::error::{Error, Result};
use crate::obs::{build_observation, check_termination, compute_reward, EpisodeStatus, Observation, RewardBreakdown};
use crate::sim::{step_world, Collision, ControlInput, ScenarioConfig, WorldState};

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub status: EpisodeStatus,
    pub collision: Option<Collision>,
}

/// Episodic wrapper around a scenario: world, observation and status.
#[derive(Clone, Debug)]
pub struct DrivingEnv {
    pub scenario: ScenarioConfig,
    pub world: WorldState,
    pub obs: Observation,
    pub status: EpisodeStatus,
    pub collision: Option<Collision>,
    pub episode_seed: u64,
}

impl DrivingEnv {
    pub fn new(scenario: ScenarioConfig, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let world = scenario.build_world(seed);
        let obs = build_observation(&world)?;
        Ok(Self {
            scenario,
            world,
            obs,
            status: EpisodeStatus::Running,
            collision: None,
            episode_seed: seed,
        })
    }

    pub fn reset(&mut self, seed: u64) -> Result<()> {
        self.world = self.scenario.build_world(seed);
        self.obs = build_observation(&self.world)?;
        self.status = EpisodeStatus::Running;
        self.collision = None;
        self.episode_seed = seed;
        Ok(())
    }

    /// Apply `u` for one step. A terminal state whose observation cannot be
    /// built (ego off the map) keeps the previous observation.
    pub fn step(&mut self, u: ControlInput) -> Result<StepOutcome> {
        if self.status.is_terminal() {
            return Err(Error::Precondition(format!(
                "episode {} already ended ({:?})",
                self.episode_seed, self.status
            )));
        }
        let prev = self.world.clone();
        step_world(&mut self.world, u);
        let (status, collision) = check_termination(&self.world, self.scenario.max_steps);
        match build_observation(&self.world) {
            Ok(o) => self.obs = o,
            Err(e) if !status.is_terminal() => return Err(e),
            Err(_) => {}
        }
        let reward = compute_reward(&prev, &self.world, status);
        self.status = status;
        self.collision = collision;
        Ok(StepOutcome {
            reward,
            status,
            collision,
        })
    }
}
