//! Small, dependency-free statistics kernel for campaign analysis.
//!
//! Provides exactly the tools the reporting layer needs: empirical CDFs,
//! the two-sample Kolmogorov–Smirnov test with the classic asymptotic
//! p-value (including the Stephens small-sample correction), Spearman rank
//! correlation with mid-rank tie handling, and strict-threshold success
//! rates. All of it is deterministic and allocation-light so reports are
//! byte-reproducible.

/// An empirical cumulative distribution function, right-continuous:
/// `eval(x)` = fraction of samples ≤ x.
#[derive(Clone, Debug)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "ECDF of an empty sample");
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples with value ≤ x.
    pub fn eval(&self, x: f64) -> f64 {
        // partition_point gives the count of samples ≤ x.
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// The sorted support points (useful for plotting step curves).
    pub fn support(&self) -> &[f64] {
        &self.sorted
    }
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsTest {
    /// Supremum gap between the two empirical CDFs.
    pub statistic: f64,
    /// Asymptotic two-sided p-value, clamped to (0, 1].
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test.
///
/// The statistic is the exact sup-norm distance between the two empirical
/// CDFs, computed by a tie-aware merge scan. The p-value uses the asymptotic
/// Kolmogorov distribution Q(λ) with the Stephens effective-sample-size
/// correction λ = (√nₑ + 0.12 + 0.11/√nₑ)·D, nₑ = nm/(n+m).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty(), "KS test on empty sample");
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sample"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sample"));

    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n || j < m {
        // Next distinct support point of the pooled sample.
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&va), Some(&vb)) => va.min(vb),
            (Some(&va), None) => va,
            (None, Some(&vb)) => vb,
            (None, None) => unreachable!(),
        };
        while i < n && sa[i] <= x {
            i += 1;
        }
        while j < m && sb[j] <= x {
            j += 1;
        }
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(gap);
    }

    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsTest { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// Complementary CDF of the Kolmogorov distribution,
/// Q(λ) = 2 Σₖ (−1)^(k−1) exp(−2k²λ²), clamped to (0, 1].
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 2.0;
    let mut prev_term = 0.0;
    for k in 1..=100 {
        let term = sign * (a2 * (k * k) as f64).exp();
        sum += term;
        if term.abs() <= 1e-3 * prev_term || term.abs() <= 1e-12 * sum.abs() {
            return sum.clamp(f64::MIN_POSITIVE, 1.0);
        }
        prev_term = term.abs();
        sign = -sign;
    }
    1.0 // series failed to converge: no evidence against the null
}

/// Spearman rank correlation with mid-rank tie handling.
///
/// Equivalent to the Pearson correlation of the two rank vectors, where tied
/// values share the average of the ranks they occupy. Returns 0 when either
/// input has zero rank variance (all values tied).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must match in length");
    assert!(a.len() >= 2, "correlation needs at least two pairs");
    let ra = mid_ranks(a);
    let rb = mid_ranks(b);
    pearson(&ra, &rb)
}

/// Mid-ranks (1-based; ties get the mean of the ranks they span).
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("non-finite sample"));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end (0-based) hold ties: average 1-based rank.
        let mid = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = mid;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Fraction of values strictly below the threshold.
pub fn success_rate(values: &[f64], threshold: f64) -> f64 {
    assert!(!values.is_empty());
    values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64
}

/// Percentile by linear interpolation between closest ranks (p in [0, 100]).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    assert!((0.0..=100.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Median (50th percentile).
pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ecdf_evaluates_the_sample_fraction() {
        let e = Ecdf::new(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.eval(2.5), 0.5);
        assert_eq!(e.eval(0.0), 0.0);
        assert_eq!(e.eval(4.0), 1.0);
        assert_eq!(e.eval(100.0), 1.0);
        // Right-continuity: at a support point the jump has happened.
        assert_eq!(e.eval(2.0), 0.5);
        assert_eq!(e.eval(1.999_999), 0.25);
    }

    #[test]
    fn ecdf_handles_ties() {
        let e = Ecdf::new(&[1.0, 1.0, 1.0, 2.0]);
        assert_eq!(e.eval(1.0), 0.75);
        assert_eq!(e.eval(0.5), 0.0);
    }

    #[test]
    fn ks_statistic_of_shifted_supports() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let ks = ks_two_sample(&a, &b);
        assert_abs_diff_eq!(ks.statistic, 0.2, epsilon = 1e-12);
        // Symmetric in its arguments.
        let rev = ks_two_sample(&b, &a);
        assert_eq!(ks.statistic, rev.statistic);
        assert_eq!(ks.p_value, rev.p_value);
    }

    #[test]
    fn ks_of_identical_samples_is_null() {
        let a = [0.3, 0.1, 0.4, 0.1, 0.5];
        let ks = ks_two_sample(&a, &a);
        assert_eq!(ks.statistic, 0.0);
        assert_eq!(ks.p_value, 1.0);
    }

    #[test]
    fn ks_of_disjoint_samples_is_extreme() {
        let a: Vec<f64> = (0..50).map(f64::from).collect();
        let b: Vec<f64> = (100..150).map(f64::from).collect();
        let ks = ks_two_sample(&a, &b);
        assert_eq!(ks.statistic, 1.0);
        assert!(ks.p_value < 1e-10);
    }

    #[test]
    fn ks_handles_heavy_ties_exactly() {
        // Pooled supports share the value 1.0; the tie-aware scan must
        // evaluate both CDFs after the full jump.
        let a = [1.0, 1.0, 1.0, 1.0];
        let b = [1.0, 1.0, 2.0, 2.0];
        let ks = ks_two_sample(&a, &b);
        assert_abs_diff_eq!(ks.statistic, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ks_null_rejection_rate_is_calibrated() {
        // Under the null (both samples from the same distribution) the test
        // at level 0.05 should reject about 5% of the time. Allow a generous
        // band around that for 1000 trials of n = m = 100.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 1000;
        let mut rejections = 0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            if ks_two_sample(&a, &b).p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!(
            (0.02..=0.08).contains(&rate),
            "null rejection rate {rate} outside [0.02, 0.08]"
        );
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let x: Vec<f64> = (1..=20).map(f64::from).collect();
        let cubes: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        assert_abs_diff_eq!(spearman(&x, &cubes), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(spearman(&x, &neg), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_mid_rank_tie_value_is_exact() {
        // a = [1, 2, 2, 3] ranks to [1, 2.5, 2.5, 4]; against [1, 2, 3, 4]
        // the Pearson correlation of ranks is √0.9.
        let a = [1.0, 2.0, 2.0, 3.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(spearman(&a, &b), 0.9f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let y_exp: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        assert_abs_diff_eq!(spearman(&x, &y), spearman(&x, &y_exp), epsilon = 1e-12);
    }

    #[test]
    fn spearman_of_constant_input_is_zero() {
        let a = [1.0; 5];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&a, &b), 0.0);
    }

    #[test]
    fn success_rate_is_strict() {
        let v = [0.05, 0.1, 0.15];
        assert_abs_diff_eq!(success_rate(&v, 0.1), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(success_rate(&v, 1.0), 1.0);
        assert_eq!(success_rate(&v, 0.01), 0.0);
    }

    #[test]
    fn percentiles_interpolate_between_ranks() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_abs_diff_eq!(percentile(&v, 25.0), 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(percentile(&v, 90.0), 3.7, epsilon = 1e-12);
    }
}
