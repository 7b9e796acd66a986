//! Cross-scenario comparison: success rates, distribution summaries,
//! pairwise distribution tests, and the deterministic report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fss_core::metrics::DesignTarget;
use fss_core::stats::{ks_two_sample, median, percentile, KsTest};

use crate::campaign::{target_label, Campaign};
use crate::scenario::Scenario;
use crate::HarnessError;

/// Two distributions are called significantly different below this p-value.
pub const SIGNIFICANCE_ALPHA: f64 = 0.05;

/// Distribution summary of one campaign.
#[derive(Clone, Debug)]
pub struct ScenarioStats {
    pub scenario: Scenario,
    pub n_runs: usize,
    pub success_rate: f64,
    pub median_final: f64,
    pub p90_final: f64,
    /// Mean reference calls per run spent inside the optimizer.
    pub mean_hf_in_run: f64,
}

/// Final-score distribution test between two scenarios.
#[derive(Clone, Debug)]
pub struct PairKs {
    pub a: Scenario,
    pub b: Scenario,
    pub ks: KsTest,
}

impl PairKs {
    pub fn significant(&self) -> bool {
        self.ks.p_value < SIGNIFICANCE_ALPHA
    }
}

/// The full comparison of several same-target campaigns.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub target: DesignTarget,
    pub stats: Vec<ScenarioStats>,
    pub pairs: Vec<PairKs>,
}

/// Compares campaigns that chased the same target: success rates, final
/// percentiles, and all pairwise Kolmogorov–Smirnov tests on the final
/// verified design errors.
pub fn compare_scenarios(campaigns: &[Campaign]) -> Result<Comparison, HarnessError> {
    let Some(first) = campaigns.first() else {
        return Err(HarnessError::ConfigInvalid("nothing to compare".into()));
    };
    for c in campaigns {
        if c.target != first.target {
            return Err(HarnessError::TargetMismatch {
                expected: target_label(&first.target),
                found: target_label(&c.target),
            });
        }
    }

    let stats = campaigns
        .iter()
        .map(|c| {
            let finals = c.final_scores();
            ScenarioStats {
                scenario: c.scenario,
                n_runs: finals.len(),
                success_rate: c.success_rate(),
                median_final: median(&finals),
                p90_final: percentile(&finals, 90.0),
                mean_hf_in_run: c.hf_calls_in_run_total() as f64 / finals.len() as f64,
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..campaigns.len() {
        for j in i + 1..campaigns.len() {
            pairs.push(PairKs {
                a: campaigns[i].scenario,
                b: campaigns[j].scenario,
                ks: ks_two_sample(&campaigns[i].final_scores(), &campaigns[j].final_scores()),
            });
        }
    }

    Ok(Comparison { target: first.target, stats, pairs })
}

impl Comparison {
    /// Human-readable comparison for the terminal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "target: {}", target_label(&self.target));
        let _ = writeln!(
            out,
            "{:<22} {:>6} {:>9} {:>10} {:>10} {:>12}",
            "scenario", "runs", "success", "median", "p90", "hf/run"
        );
        for s in &self.stats {
            let _ = writeln!(
                out,
                "{:<22} {:>6} {:>8.1}% {:>10.4} {:>10.4} {:>12.1}",
                s.scenario.label(),
                s.n_runs,
                100.0 * s.success_rate,
                s.median_final,
                s.p90_final,
                s.mean_hf_in_run
            );
        }
        if !self.pairs.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<22} {:<22} {:>8} {:>12} {:>12}",
                "scenario a", "scenario b", "ks d", "p-value", "significant"
            );
            for p in &self.pairs {
                let _ = writeln!(
                    out,
                    "{:<22} {:<22} {:>8.4} {:>12.4e} {:>12}",
                    p.a.label(),
                    p.b.label(),
                    p.ks.statistic,
                    p.ks.p_value,
                    p.significant()
                );
            }
        }
        out
    }
}

/// Empirical CDF of the final verified design errors, one block per
/// scenario: `ecdf` jumps by 1/n at each sorted final.
pub fn ecdf_csv(campaigns: &[Campaign]) -> String {
    let mut out = String::from("scenario,final_hf_des_mae,ecdf\n");
    for c in campaigns {
        let mut finals = c.final_scores();
        finals.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        let n = finals.len() as f64;
        for (i, v) in finals.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6}",
                c.scenario.label(),
                v,
                (i + 1) as f64 / n
            );
        }
    }
    out
}

/// Convergence summary: per scenario and iteration, the quartiles across
/// runs of the running-minimum verified design error.
pub fn convergence_csv(campaigns: &[Campaign]) -> String {
    let mut out = String::from("scenario,iteration,q1,median,q3\n");
    for c in campaigns {
        let curves = c.cum_min_curves();
        let n_itr = curves.iter().map(Vec::len).max().unwrap_or(0);
        for it in 0..n_itr {
            let column: Vec<f64> = curves.iter().filter_map(|c| c.get(it).copied()).collect();
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                c.scenario.label(),
                it + 1,
                percentile(&column, 25.0),
                median(&column),
                percentile(&column, 75.0),
            );
        }
    }
    out
}

/// Long-format pairwise test table: one row per scenario pair.
pub fn ks_matrix_csv(comparison: &Comparison) -> String {
    let mut out = String::from("scenario_a,scenario_b,d_stat,p_value,significant\n");
    for p in &comparison.pairs {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6e},{}",
            p.a.label(),
            p.b.label(),
            p.ks.statistic,
            p.ks.p_value,
            p.significant()
        );
    }
    out
}

/// Writes `ecdf.csv`, `convergence.csv`, and `ks_matrix.csv` into `dir`.
pub fn write_report_files(campaigns: &[Campaign], dir: &Path) -> Result<Comparison, HarnessError> {
    let comparison = compare_scenarios(campaigns)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("ecdf.csv"), ecdf_csv(campaigns))?;
    fs::write(dir.join("convergence.csv"), convergence_csv(campaigns))?;
    fs::write(dir.join("ks_matrix.csv"), ks_matrix_csv(&comparison))?;
    Ok(comparison)
}
