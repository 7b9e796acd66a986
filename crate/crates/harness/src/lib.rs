//! Experiment harness: turns the core optimizers into reproducible,
//! comparable campaigns.
//!
//! * [`config`] — one TOML file with defaults for every knob.
//! * [`scenario`] — the named optimizer recipes a campaign can field.
//! * [`campaign`] — many-run orchestration, the reference-call ledger,
//!   post-hoc verification, and the `runs.ndjson` / `summary.csv` writers.
//! * [`reports`] — success rates, pairwise distribution tests, and the
//!   `ecdf.csv` / `convergence.csv` / `ks_matrix.csv` writers.
//! * [`triage`] — the error-triage and metric-calibration studies.
//!
//! Everything an experiment writes is a pure function of the configuration:
//! re-running a campaign reproduces its artifacts byte for byte (wall-clock
//! time is reported to the terminal only).

use thiserror::Error;

pub mod campaign;
pub mod config;
pub mod reports;
pub mod scenario;
pub mod triage;

pub use campaign::{run_campaign, write_campaign_files, Campaign, RunOutcome};
pub use config::{CampaignConfig, HarnessConfig};
pub use reports::{compare_scenarios, write_report_files, Comparison};
pub use scenario::Scenario;
pub use triage::{calibration_check, triage_experiment, CalibrationReport, TriageReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("cannot compare campaigns across targets: expected {expected}, found {found}")]
    TargetMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error(transparent)]
    Swarm(#[from] fss_core::bpso::SwarmError),
    #[error(transparent)]
    Surrogate(#[from] fss_core::surrogate::SurrogateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Builds the full deployment from a config: reference solver, training
/// set, and trained ensemble.
pub fn build_stack(
    cfg: &HarnessConfig,
) -> Result<(fss_core::oracle::Oracle, fss_core::surrogate::Ensemble), HarnessError> {
    cfg.validate()?;
    let oracle = fss_core::oracle::Oracle::new(cfg.oracle.clone());
    let ts = fss_core::surrogate::generate_dataset(&oracle, cfg.surrogate.n_train, cfg.surrogate.dataset_seed)?;
    let ensemble = fss_core::surrogate::train_ensemble(
        &ts,
        cfg.surrogate.n_members,
        cfg.surrogate.feature_seed_base,
        &cfg.surrogate,
    )?;
    Ok((oracle, ensemble))
}
