//! Reliability studies of the uncertainty metrics themselves: does flagging
//! high-uncertainty designs actually catch the surrogate's worst errors
//! (triage), and do the metrics rank true error at all (calibration)?

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fss_core::design::{random_design, OctantDesign};
use fss_core::metrics::{ensemble_spread, physics_residual, transmission_mae};
use fss_core::oracle::Oracle;
use fss_core::stats::{ks_two_sample, spearman, KsTest};
use fss_core::surrogate::{Ensemble, SurrogateModel};

use crate::HarnessError;

/// Outcome of the error-triage experiment.
#[derive(Clone, Debug)]
pub struct TriageReport {
    pub trials: usize,
    pub n_test: usize,
    /// Designs removed per trial under the review budget.
    pub removed_per_trial: usize,
    /// Trials where physics-residual triage reduced the worst surviving
    /// error more than random triage did.
    pub wins_phy: usize,
    /// Same for ensemble-disagreement triage.
    pub wins_ensb: usize,
    pub mean_reduction_phy: f64,
    pub mean_reduction_ensb: f64,
    pub mean_reduction_random: f64,
    /// Distribution test: worst surviving error after random triage vs no
    /// triage at all. Random review of a small budget should be
    /// indistinguishable from doing nothing.
    pub ks_random_vs_noop: KsTest,
}

impl TriageReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "triage: {} trials x {} designs, removing {} per trial",
            self.trials, self.n_test, self.removed_per_trial
        );
        let _ = writeln!(
            out,
            "physics-residual triage beats random in {}/{} trials (mean worst-error reduction {:.4} vs {:.4})",
            self.wins_phy, self.trials, self.mean_reduction_phy, self.mean_reduction_random
        );
        let _ = writeln!(
            out,
            "ensemble-spread  triage beats random in {}/{} trials (mean worst-error reduction {:.4})",
            self.wins_ensb, self.trials, self.mean_reduction_ensb
        );
        let _ = writeln!(
            out,
            "random triage vs no-op: KS d = {:.4}, p = {:.4}",
            self.ks_random_vs_noop.statistic, self.ks_random_vs_noop.p_value
        );
        out
    }
}

/// Max of the values whose index survives the removal set.
fn surviving_max(errs: &[f64], removed: &[bool]) -> f64 {
    errs.iter()
        .zip(removed)
        .filter(|(_, &r)| !r)
        .map(|(&e, _)| e)
        .fold(0.0f64, f64::max)
}

/// Marks the `k` indices with the largest scores (ties resolved toward the
/// lower index, deterministically).
fn mark_top_k(scores: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("finite scores")
            .then(i.cmp(&j))
    });
    let mut removed = vec![false; scores.len()];
    for &i in order.iter().take(k) {
        removed[i] = true;
    }
    removed
}

/// Marks `k` distinct random indices (partial Fisher–Yates).
fn mark_random_k<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut removed = vec![false; n];
    for &i in idx.iter().take(k) {
        removed[i] = true;
    }
    removed
}

/// Simulates an expert-review workflow: each trial draws `n_test` fresh
/// designs, flags the top `budget_fraction` of them by each uncertainty
/// metric, removes the flagged designs, and asks how much the worst
/// surviving true surrogate error dropped — compared against spending the
/// same budget on randomly chosen designs.
pub fn triage_experiment(
    model: &SurrogateModel,
    ensemble: &Ensemble,
    oracle: &Oracle,
    n_test: usize,
    budget_fraction: f64,
    trials: usize,
    seed: u64,
) -> Result<TriageReport, HarnessError> {
    if n_test == 0 || trials == 0 {
        return Err(HarnessError::ConfigInvalid(
            "triage needs at least one design and one trial".into(),
        ));
    }
    if !(0.0..=1.0).contains(&budget_fraction) {
        return Err(HarnessError::ConfigInvalid(format!(
            "budget_fraction must lie in [0, 1], got {budget_fraction}"
        )));
    }
    let k = (budget_fraction * n_test as f64).floor() as usize;

    let mut wins_phy = 0;
    let mut wins_ensb = 0;
    let mut red_phy_sum = 0.0;
    let mut red_ensb_sum = 0.0;
    let mut red_rnd_sum = 0.0;
    let mut noop_maxes = Vec::with_capacity(trials);
    let mut rnd_maxes = Vec::with_capacity(trials);

    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + t as u64);
        let designs: Vec<OctantDesign> = (0..n_test).map(|_| random_design(&mut rng)).collect();

        let spectra = model.predict_batch(&designs);
        let curves = ensemble.member_t_mags(&designs);
        let errs: Vec<f64> = designs
            .iter()
            .zip(&curves)
            .map(|(d, c)| transmission_mae(&c[0], &oracle.spectrum(d).t_mag()))
            .collect();
        let phy: Vec<f64> = spectra.iter().map(physics_residual).collect();
        let ensb: Vec<f64> = curves.iter().map(|c| ensemble_spread(c)).collect();

        let noop_max = errs.iter().fold(0.0f64, |a, &b| a.max(b));
        let phy_max = surviving_max(&errs, &mark_top_k(&phy, k));
        let ensb_max = surviving_max(&errs, &mark_top_k(&ensb, k));
        let rnd_max = surviving_max(&errs, &mark_random_k(n_test, k, &mut rng));

        let red_phy = noop_max - phy_max;
        let red_ensb = noop_max - ensb_max;
        let red_rnd = noop_max - rnd_max;
        if red_phy > red_rnd {
            wins_phy += 1;
        }
        if red_ensb > red_rnd {
            wins_ensb += 1;
        }
        red_phy_sum += red_phy;
        red_ensb_sum += red_ensb;
        red_rnd_sum += red_rnd;
        noop_maxes.push(noop_max);
        rnd_maxes.push(rnd_max);
    }

    Ok(TriageReport {
        trials,
        n_test,
        removed_per_trial: k,
        wins_phy,
        wins_ensb,
        mean_reduction_phy: red_phy_sum / trials as f64,
        mean_reduction_ensb: red_ensb_sum / trials as f64,
        mean_reduction_random: red_rnd_sum / trials as f64,
        ks_random_vs_noop: ks_two_sample(&rnd_maxes, &noop_maxes),
    })
}

/// How well the uncertainty metrics rank the true surrogate error.
#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub n: usize,
    /// Rank correlation of the physics residual with true surrogate error.
    pub spearman_phy: f64,
    /// Rank correlation of the ensemble spread with true surrogate error.
    pub spearman_ensb: f64,
    pub mean_lf_mae: f64,
}

impl CalibrationReport {
    pub fn render(&self) -> String {
        format!(
            "calibration over {} held-out designs: mean surrogate |T| error {:.4}; \
             spearman(physics residual, true error) = {:.3}; \
             spearman(ensemble spread, true error) = {:.3}\n",
            self.n, self.mean_lf_mae, self.spearman_phy, self.spearman_ensb
        )
    }
}

/// Scores both uncertainty metrics against the true surrogate error on `n`
/// fresh designs the model never saw.
pub fn calibration_check(
    model: &SurrogateModel,
    ensemble: &Ensemble,
    oracle: &Oracle,
    n: usize,
    seed: u64,
) -> Result<CalibrationReport, HarnessError> {
    if n < 2 {
        return Err(HarnessError::ConfigInvalid(
            "calibration needs at least two designs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let designs: Vec<OctantDesign> = (0..n).map(|_| random_design(&mut rng)).collect();
    let spectra = model.predict_batch(&designs);
    let curves = ensemble.member_t_mags(&designs);
    let errs: Vec<f64> = designs
        .iter()
        .zip(&curves)
        .map(|(d, c)| transmission_mae(&c[0], &oracle.spectrum(d).t_mag()))
        .collect();
    let phy: Vec<f64> = spectra.iter().map(physics_residual).collect();
    let ensb: Vec<f64> = curves.iter().map(|c| ensemble_spread(c)).collect();

    Ok(CalibrationReport {
        n,
        spearman_phy: spearman(&phy, &errs),
        spearman_ensb: spearman(&ensb, &errs),
        mean_lf_mae: errs.iter().sum::<f64>() / n as f64,
    })
}
