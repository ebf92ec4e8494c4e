use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AgentVariant;
use crate::bc::{BcTrainConfig, ExpertConfig};
use crate::error::{Error, Result};
use crate::planner::PlannerConfig;
use crate::policy::{ActionRanges, MixingConfig, SacConfig};
use crate::sim::ScenarioConfig;

/// Everything a run depends on; serialized into its directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: AgentVariant,
    pub seed: u64,
    /// Scenario file; when set it replaces the inline `scenario` on load.
    pub scenario_path: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    /// Environment steps of RL training.
    pub budget: u64,
    /// Environment steps between evaluations (an evaluation also runs at
    /// step 0 and at the end).
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Evaluation episode `k` uses seed `eval_seed_base + k`.
    pub eval_seed_base: u64,
    /// Environment steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Basic-model checkpoint for the variants that use one.
    pub basic_model: Option<PathBuf>,
    pub demo_episodes: usize,
    /// Slice horizon for demonstration labels (s).
    pub t_c: f64,
    pub sac: SacConfig,
    pub planner: PlannerConfig,
    pub mixing: MixingConfig,
    pub ranges: ActionRanges,
    pub expert: ExpertConfig,
    pub bc: BcTrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: AgentVariant::Proposed,
            seed: 0,
            scenario_path: None,
            scenario: ScenarioConfig::default(),
            budget: 150_000,
            eval_interval: 25_000,
            eval_episodes: 10,
            eval_seed_base: 1_000_000,
            checkpoint_every: 25_000,
            basic_model: None,
            demo_episodes: 20,
            t_c: 2.0,
            sac: SacConfig::default(),
            planner: PlannerConfig::default(),
            mixing: MixingConfig::default(),
            ranges: ActionRanges::default(),
            expert: ExpertConfig::default(),
            bc: BcTrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn for_variant(variant: AgentVariant, seed: u64) -> Self {
        Self {
            variant,
            seed,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a run file, resolving `scenario_path` relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(sp) = &cfg.scenario_path {
            let sp = if sp.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(sp)
            } else {
                sp.clone()
            };
            cfg.scenario = ScenarioConfig::load(&sp)?;
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.eval_interval == 0 {
            return bad("eval_interval must be positive");
        }
        if self.sac.batch == 0 || self.sac.capacity < self.sac.batch {
            return bad("sac.batch must be positive and at most sac.capacity");
        }
        if self.sac.update_every == 0 {
            return bad("sac.update_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.sac.gamma) || !(0.0..=1.0).contains(&self.sac.tau) {
            return bad("sac.gamma and sac.tau must lie in [0, 1]");
        }
        if self.t_c <= 0.0 {
            return bad("t_c must be positive");
        }
        if self.mixing.kappa < 0.0 || self.mixing.sigma < 1.0 {
            return bad("mixing needs kappa ≥ 0 and sigma ≥ 1 so that n ≥ 1");
        }
        Ok(())
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        (0..self.eval_episodes as u64).map(|k| self.eval_seed_base + k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::for_variant(AgentVariant::RlRho, 7);
        c.basic_model = Some("bc.ckpt".into());
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("variant = \"proposed\"\nbudegt = 3\n").unwrap_err();
        assert_eq!(err.class(), "config");
        assert!(err.to_string().contains("budegt"));
    }

    #[test]
    fn bad_variant_is_a_config_error() {
        assert!(RunConfig::from_toml_str("variant = \"fastest\"\n").is_err());
    }
}
