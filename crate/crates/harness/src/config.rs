//! One human-readable configuration file drives every experiment.
//!
//! Every knob has a default that reproduces the reported experiments, and
//! every default can be overridden from a TOML file: absent sections and
//! absent keys fall back field by field.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fss_core::bpso::SwarmConfig;
use fss_core::oracle::OracleParams;
use fss_core::surrogate::{SurrogateConfig, MAX_TRAINING_SET, MIN_TRAINING_SET};

use crate::HarnessError;

/// Campaign-level settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    /// Independent optimization runs per scenario.
    pub n_runs: usize,
    /// Run r of a campaign uses swarm seed `master_seed + r`.
    pub master_seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self { n_runs: 100, master_seed: 9000 }
    }
}

/// The complete experiment configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub oracle: OracleParams,
    pub surrogate: SurrogateConfig,
    pub swarm: SwarmConfig,
    pub campaign: CampaignConfig,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let cfg: HarnessConfig = toml::from_str(&text)
            .map_err(|e| HarnessError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.swarm
            .validate()
            .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        if self.campaign.n_runs == 0 {
            return Err(HarnessError::ConfigInvalid("campaign.n_runs must be positive".into()));
        }
        let s = &self.surrogate;
        if !(MIN_TRAINING_SET..=MAX_TRAINING_SET).contains(&s.n_train) {
            return Err(HarnessError::ConfigInvalid(format!(
                "surrogate.n_train {} outside [{MIN_TRAINING_SET}, {MAX_TRAINING_SET}]",
                s.n_train
            )));
        }
        if s.n_members < 2 {
            return Err(HarnessError::ConfigInvalid(format!(
                "surrogate.n_members must be at least 2, got {}",
                s.n_members
            )));
        }
        if s.feature_dim == 0 {
            return Err(HarnessError::ConfigInvalid("surrogate.feature_dim must be positive".into()));
        }
        for (name, v) in [
            ("surrogate.ridge_lambda", s.ridge_lambda),
            ("surrogate.weight_scale", s.weight_scale),
            ("surrogate.channel_gain", s.channel_gain),
            ("surrogate.channel_clip_z", s.channel_clip_z),
            ("surrogate.conn_scale", s.conn_scale),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(HarnessError::ConfigInvalid(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        let o = &self.oracle;
        for (name, v) in [
            ("oracle.resonance_order", o.resonance_order),
            ("oracle.gamma_min_ghz", o.gamma_min_ghz),
            ("oracle.roughness_sd", o.roughness_sd),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(HarnessError::ConfigInvalid(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}
