//! The optimization strategies a campaign can field.

use std::fmt;
use std::str::FromStr;

use fss_core::bpso::MetricKind;

use crate::HarnessError;

/// A complete optimizer recipe: which runner, driven by which metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Surrogate-only classic BPSO (no reference calls at all).
    Baseline,
    /// Single-metric swarm chasing one scalar objective. With
    /// [`MetricKind::HfDesMae`] this is the exhaustive all-reference search.
    SingleMetric(MetricKind),
    /// Uncertainty warmup stage, then alternating verify/steer stage.
    Staged(MetricKind),
    /// Alternating verify/steer dynamics from the first iteration.
    AlternatingOnly(MetricKind),
}

impl Scenario {
    /// Every scenario the stock campaign battery knows how to field.
    pub fn all() -> Vec<Scenario> {
        vec![
            Scenario::Baseline,
            Scenario::SingleMetric(MetricKind::HfDesMae),
            Scenario::SingleMetric(MetricKind::LfDesMae),
            Scenario::SingleMetric(MetricKind::PhyUnc),
            Scenario::SingleMetric(MetricKind::EnsbUnc),
            Scenario::Staged(MetricKind::PhyUnc),
            Scenario::Staged(MetricKind::EnsbUnc),
            Scenario::AlternatingOnly(MetricKind::PhyUnc),
            Scenario::AlternatingOnly(MetricKind::EnsbUnc),
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::SingleMetric(MetricKind::HfDesMae) => "all-hf",
            Scenario::SingleMetric(MetricKind::LfDesMae) => "single-lf-des-mae",
            Scenario::SingleMetric(MetricKind::PhyUnc) => "single-phy-unc",
            Scenario::SingleMetric(MetricKind::EnsbUnc) => "single-ensb-unc",
            Scenario::Staged(MetricKind::PhyUnc) => "staged-phy-unc",
            Scenario::Staged(MetricKind::EnsbUnc) => "staged-ensb-unc",
            Scenario::AlternatingOnly(MetricKind::PhyUnc) => "alternating-phy-unc",
            Scenario::AlternatingOnly(MetricKind::EnsbUnc) => "alternating-ensb-unc",
            _ => unreachable!("validated scenarios only"),
        }
    }

    /// Multifidelity scenarios must be driven by an uncertainty metric.
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            Scenario::Staged(m) | Scenario::AlternatingOnly(m) if !m.is_uncertainty() => {
                Err(HarnessError::ConfigInvalid(format!(
                    "{m:?} cannot drive a multifidelity scenario; use phy-unc or ensb-unc"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Whether the runner itself evaluates designs against the reference
    /// solver (otherwise final scores come from post-hoc verification).
    pub fn verifies_in_run(&self) -> bool {
        matches!(
            self,
            Scenario::SingleMetric(MetricKind::HfDesMae)
                | Scenario::Staged(_)
                | Scenario::AlternatingOnly(_)
        )
    }

    /// Whether the scenario needs the surrogate ensemble (rather than just
    /// the deployed member).
    pub fn needs_ensemble(&self) -> bool {
        matches!(
            self,
            Scenario::SingleMetric(MetricKind::EnsbUnc)
                | Scenario::Staged(MetricKind::EnsbUnc)
                | Scenario::AlternatingOnly(MetricKind::EnsbUnc)
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sc = match s {
            "baseline" => Scenario::Baseline,
            "all-hf" => Scenario::SingleMetric(MetricKind::HfDesMae),
            "single-lf-des-mae" => Scenario::SingleMetric(MetricKind::LfDesMae),
            "single-phy-unc" => Scenario::SingleMetric(MetricKind::PhyUnc),
            "single-ensb-unc" => Scenario::SingleMetric(MetricKind::EnsbUnc),
            "staged-phy-unc" => Scenario::Staged(MetricKind::PhyUnc),
            "staged-ensb-unc" => Scenario::Staged(MetricKind::EnsbUnc),
            "alternating-phy-unc" => Scenario::AlternatingOnly(MetricKind::PhyUnc),
            "alternating-ensb-unc" => Scenario::AlternatingOnly(MetricKind::EnsbUnc),
            other => {
                return Err(HarnessError::ConfigInvalid(format!(
                    "unknown scenario '{other}' (expected one of: {})",
                    Scenario::all()
                        .iter()
                        .map(Scenario::label)
                        .collect::<Vec<_>>()
                        .join(", ")
                )))
            }
        };
        Ok(sc)
    }
}
