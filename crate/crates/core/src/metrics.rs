//! Design objectives and uncertainty metrics.
//!
//! All metrics reduce spectra to a single scalar:
//!
//! * **target MAE** (`target_mae`) — mean absolute deviation of a linear
//!   transmission magnitude from the ideal band-stop / band-pass mask; the
//!   design objective. Evaluated against the high-fidelity model it is the
//!   ground-truth figure of merit ("HF-DES-MAE"); against the surrogate it is
//!   the cheap proxy the optimizer actually sees ("LF-DES-MAE").
//! * **transmission MAE** (`transmission_mae`) — mean absolute gap between
//!   two |T| curves; comparing surrogate to reference gives the true
//!   surrogate error ("LF-MAE"), unknowable to the optimizer in-run.
//! * **physics residual** (`physics_residual`, "PHY-UNC") — how badly a
//!   spectrum violates the exact continuity identity T − R = 1. The
//!   reference model satisfies it identically, so any residual on a
//!   surrogate prediction is pure model error.
//! * **ensemble spread** (`ensemble_spread`, "ENSB-UNC") — RMS disagreement
//!   between independently trained surrogate replicas' |T| curves.

use serde::{Deserialize, Serialize};

use crate::oracle::{frequency_grid, Spectrum, N_FREQ};

/// A run is a success when the ground-truth target MAE of its best design is
/// strictly below this threshold.
pub const SUCCESS_THRESHOLD: f64 = 0.1;

/// Shape of the ideal transmission response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// |T| = 0 inside the band, 1 outside.
    BandStop,
    /// |T| = 1 inside the band, 0 outside.
    BandPass,
}

/// A design objective: an ideal |T| mask over a frequency band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignTarget {
    pub kind: TargetKind,
    pub band_lo_ghz: f64,
    pub band_hi_ghz: f64,
}

impl DesignTarget {
    /// The stock band-stop objective over 24–26 GHz.
    pub fn band_stop() -> Self {
        Self { kind: TargetKind::BandStop, band_lo_ghz: 24.0, band_hi_ghz: 26.0 }
    }

    /// The stock band-pass objective over 24–26 GHz.
    pub fn band_pass() -> Self {
        Self { kind: TargetKind::BandPass, band_lo_ghz: 24.0, band_hi_ghz: 26.0 }
    }

    /// Which frequency samples count as in-band.
    ///
    /// Sample k represents the half-open cell [fₖ, fₖ₊₁) of the grid; it is
    /// in-band when that cell intersects the target band. Band edges falling
    /// inside a cell therefore pull the whole cell in, so the stock 24–26 GHz
    /// band covers 21 samples.
    pub fn in_band_mask(&self) -> [bool; N_FREQ] {
        let grid = frequency_grid();
        let h = grid[1] - grid[0];
        let eps = 1e-9;
        let mut mask = [false; N_FREQ];
        for (k, fk) in grid.iter().enumerate() {
            mask[k] = fk + h > self.band_lo_ghz + eps && *fk <= self.band_hi_ghz + eps;
        }
        mask
    }

    /// The ideal |T| curve this target asks for.
    pub fn ideal_transmission(&self) -> [f64; N_FREQ] {
        let (inside, outside) = match self.kind {
            TargetKind::BandStop => (0.0, 1.0),
            TargetKind::BandPass => (1.0, 0.0),
        };
        let mask = self.in_band_mask();
        let mut ideal = [0.0; N_FREQ];
        for k in 0..N_FREQ {
            ideal[k] = if mask[k] { inside } else { outside };
        }
        ideal
    }
}

/// Mean absolute difference of two equal-length curves.
fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Design objective: mean absolute deviation of a linear |T| curve from the
/// target's ideal mask.
pub fn target_mae(t_mag: &[f64], target: &DesignTarget) -> f64 {
    mean_abs_diff(t_mag, &target.ideal_transmission())
}

/// Mean absolute gap between two |T| curves (e.g. surrogate vs reference).
pub fn transmission_mae(a: &[f64], b: &[f64]) -> f64 {
    mean_abs_diff(a, b)
}

/// Physics-consistency residual of a complex spectrum: the mean over
/// frequency of |Re T − Re R − 1| + |Im T − Im R|.
///
/// This is zero for any response obeying the exact continuity identity
/// T − R = 1, as the reference model does; a learned surrogate with
/// independently trained T and R heads violates it wherever it extrapolates.
pub fn physics_residual(s: &Spectrum) -> f64 {
    let mut acc = 0.0;
    for k in 0..N_FREQ {
        acc += (s.t_re[k] - s.r_re[k] - 1.0).abs() + (s.t_im[k] - s.r_im[k]).abs();
    }
    acc / N_FREQ as f64
}

/// Ensemble disagreement: the RMS pointwise spread of the members' |T|
/// curves around their mean curve,
/// sqrt(meanᵢ meanₖ (fᵢ[k] − f̄[k])²).
///
/// Zero when all members agree; adding a member equal to the current mean
/// strictly lowers it (the spread is a population RMS, not a range).
pub fn ensemble_spread(t_mags: &[Vec<f64>]) -> f64 {
    let n = t_mags.len();
    assert!(n >= 2, "ensemble spread needs at least two members");
    let len = t_mags[0].len();
    assert!(t_mags.iter().all(|m| m.len() == len));

    let mut mean = vec![0.0; len];
    for member in t_mags {
        for (m, v) in mean.iter_mut().zip(member) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut acc = 0.0;
    for member in t_mags {
        let mut sq = 0.0;
        for (v, m) in member.iter().zip(&mean) {
            sq += (v - m) * (v - m);
        }
        acc += sq / len as f64;
    }
    (acc / n as f64).sqrt()
}

/// Strict success test on the ground-truth design objective.
pub fn is_success(hf_target_mae: f64) -> bool {
    hf_target_mae < SUCCESS_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::random_design;
    use crate::oracle::Oracle;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stock_band_covers_twenty_one_samples() {
        let mask = DesignTarget::band_stop().in_band_mask();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 21);
        // The in-band run is contiguous: samples 39 through 59.
        assert!(!mask[38] && mask[39] && mask[59] && !mask[60]);
        // Band-pass over the same band selects the same samples.
        assert_eq!(mask, DesignTarget::band_pass().in_band_mask());
    }

    #[test]
    fn flat_transmission_scores_the_band_fraction() {
        // |T| ≡ 1 misses a band-stop target exactly on the 21 in-band
        // samples: MAE = 21/100.
        let flat_one = vec![1.0; N_FREQ];
        assert_abs_diff_eq!(
            target_mae(&flat_one, &DesignTarget::band_stop()),
            0.21,
            epsilon = 1e-12
        );
        // ...and misses band-pass on the other 79.
        assert_abs_diff_eq!(
            target_mae(&flat_one, &DesignTarget::band_pass()),
            0.79,
            epsilon = 1e-12
        );
        let flat_zero = vec![0.0; N_FREQ];
        assert_abs_diff_eq!(
            target_mae(&flat_zero, &DesignTarget::band_stop()),
            0.79,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ideal_curve_scores_zero() {
        for target in [DesignTarget::band_stop(), DesignTarget::band_pass()] {
            let ideal = target.ideal_transmission().to_vec();
            assert_eq!(target_mae(&ideal, &target), 0.0);
        }
    }

    #[test]
    fn physics_residual_of_constant_offset_spectrum() {
        // T ≡ 0.3 + 0.2i against R ≡ −0.8 − 0.1i: the real part misses the
        // continuity identity by |0.3 + 0.8 − 1| = 0.1 and the imaginary part
        // by |0.2 + 0.1| = 0.3, at every frequency.
        let s = Spectrum::new(
            vec![0.3; N_FREQ],
            vec![0.2; N_FREQ],
            vec![-0.8; N_FREQ],
            vec![-0.1; N_FREQ],
        );
        assert_abs_diff_eq!(physics_residual(&s), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn physics_residual_vanishes_on_reference_spectra() {
        let oracle = Oracle::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            assert_eq!(physics_residual(&oracle.spectrum(&random_design(&mut rng))), 0.0);
        }
    }

    #[test]
    fn ensemble_spread_of_two_opposite_members() {
        let members = vec![vec![0.0; N_FREQ], vec![1.0; N_FREQ]];
        assert_abs_diff_eq!(ensemble_spread(&members), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn adding_the_mean_member_strictly_shrinks_the_spread() {
        let two = vec![vec![0.0; N_FREQ], vec![1.0; N_FREQ]];
        let spread_two = ensemble_spread(&two);
        let mut three = two.clone();
        three.push(vec![0.5; N_FREQ]); // the mean of the first two
        let spread_three = ensemble_spread(&three);
        assert!(spread_three < spread_two);
        assert_abs_diff_eq!(spread_three, (1.0f64 / 6.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ensemble_spread_is_shift_invariant_and_zero_on_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let base: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..N_FREQ).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = base
            .iter()
            .map(|m| m.iter().map(|v| v + 0.37).collect())
            .collect();
        assert_abs_diff_eq!(
            ensemble_spread(&base),
            ensemble_spread(&shifted),
            epsilon = 1e-12
        );

        let same = vec![base[0].clone(); 10];
        assert!(ensemble_spread(&same) < 1e-12);
    }

    #[test]
    fn metrics_stay_in_range_on_random_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t: Vec<f64> = (0..N_FREQ).map(|_| rng.gen::<f64>()).collect();
            for target in [DesignTarget::band_stop(), DesignTarget::band_pass()] {
                let mae = target_mae(&t, &target);
                assert!((0.0..=1.0).contains(&mae));
            }
        }
    }

    #[test]
    fn success_is_a_strict_threshold() {
        assert!(is_success(0.099));
        assert!(!is_success(SUCCESS_THRESHOLD));
        assert!(!is_success(0.11));
    }
}
