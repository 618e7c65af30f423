use alloc::vec;
use alloc::vec::Vec;

use super::{TestMethod, TestResult};
use crate::math;
use crate::special;

/// Largest number of nonzero differences handled by the exact distribution.
pub const EXACT_LIMIT: usize = 25;

/// Doubled midranks of `|d|` for the nonzero differences, with their signs
/// (`true` for positive). Doubling keeps tied midranks integral.
pub fn signed_ranks(differences: &[f64]) -> Vec<(u64, bool)> {
    let mut nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut out = Vec::with_capacity(nonzero.len());
    let mut i = 0;
    while i < nonzero.len() {
        let mut j = i;
        while j + 1 < nonzero.len() && nonzero[j + 1].abs() == nonzero[i].abs() {
            j += 1;
        }
        // Ranks i+1..=j+1 share the midrank (i + j + 2) / 2; doubled that is i + j + 2.
        let doubled = (i + j + 2) as u64;
        for d in &nonzero[i..=j] {
            out.push((doubled, *d > 0.0));
        }
        i = j + 1;
    }
    out
}

/// Null distribution of the doubled positive-rank sum: entry `s` is the
/// probability that it equals `s` when every sign is a fair coin.
pub fn exact_signed_rank_distribution(doubled_ranks: &[u64]) -> Vec<f64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let scale = libm::ldexp(1.0, -(doubled_ranks.len() as i32));
    counts.iter().map(|c| c * scale).collect()
}

/// Two-sided Wilcoxon signed-rank test on paired observations `(a, b)`,
/// testing whether `b - a` is symmetric about zero.
///
/// The statistic is the positive-rank sum `W+`. Zero differences are
/// dropped and tied magnitudes share midranks. Up to [`EXACT_LIMIT`] nonzero
/// differences the p-value comes from the exact permutation distribution;
/// above it from the normal approximation with tie and continuity
/// corrections. All-zero differences give `p = 1`.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> TestResult {
    let differences: Vec<f64> = pairs.iter().map(|(a, b)| b - a).collect();
    let ranks = signed_ranks(&differences);
    let n = ranks.len();
    if n == 0 {
        return TestResult { statistic: 0.0, p_value: 1.0, df: None, method: TestMethod::Degenerate };
    }
    let w2: u64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
    let statistic = w2 as f64 / 2.0;
    if n <= EXACT_LIMIT {
        let doubled: Vec<u64> = ranks.iter().map(|r| r.0).collect();
        let dist = exact_signed_rank_distribution(&doubled);
        let w2 = w2 as usize;
        let lower = math::stable_sum(&dist[..=w2]);
        let upper = math::stable_sum(&dist[w2..]);
        let p_value = (2.0 * lower.min(upper)).min(1.0);
        return TestResult { statistic, p_value, df: None, method: TestMethod::WilcoxonExact };
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    // Tie correction: sum of t^3 - t over groups of equal magnitude.
    let mut tie = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && ranks[j + 1].0 == ranks[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / math::sqrt(variance);
    let p_value = (2.0 * special::normal_sf(z)).min(1.0);
    TestResult { statistic, p_value, df: None, method: TestMethod::WilcoxonNormal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diffs(d: &[f64]) -> Vec<(f64, f64)> {
        d.iter().map(|x| (0.0, *x)).collect()
    }

    #[test]
    fn textbook_cases() {
        let r = wilcoxon_signed_rank(&diffs(&[1.0, 2.0, 3.0]));
        assert_eq!(r.statistic, 6.0);
        assert_eq!(r.p_value, 0.25);
        assert_eq!(r.method, TestMethod::WilcoxonExact);

        let r = wilcoxon_signed_rank(&diffs(&[1.0, -1.0]));
        assert_eq!(r.statistic, 1.5);
        assert_eq!(r.p_value, 1.0);

        let same = wilcoxon_signed_rank(&[(2.0, 2.0), (3.0, 3.0)]);
        assert_eq!((same.p_value, same.method), (1.0, TestMethod::Degenerate));
    }

    #[test]
    fn midranks_and_zeros() {
        let r = signed_ranks(&[0.0, -2.0, 2.0, 1.0, 5.0]);
        // |1| -> 1, |2| twice -> 2.5, |5| -> 4; doubled.
        let doubled: Vec<u64> = r.iter().map(|x| x.0).collect();
        assert_eq!(doubled, vec![2, 5, 5, 8]);
    }

    #[test]
    fn distribution_sums_to_one() {
        for ranks in [vec![2u64, 4, 6], vec![3, 3, 6, 8, 10], (1..=25).map(|r| 2 * r).collect()] {
            let total: f64 = exact_signed_rank_distribution(&ranks).iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_sample_uses_normal_approximation() {
        // Reference: scipy.stats.wilcoxon(d, correction=True, method="approx").
        let mut d = vec![1.0, 2.0, 2.0, -3.0, 4.0, 4.0, 4.0, -5.0];
        d.extend((6..30).map(f64::from));
        d.extend([-30.0, -31.0, -31.0]);
        let r = wilcoxon_signed_rank(&diffs(&d));
        assert_eq!(r.method, TestMethod::WilcoxonNormal);
        assert_eq!(r.statistic, 516.0);
        assert_abs_diff_eq!(r.p_value, 0.001_022_184_017_613_434_1, epsilon = 1e-12);
        let all_positive: Vec<f64> = (1..=30).map(f64::from).collect();
        assert!(wilcoxon_signed_rank(&diffs(&all_positive)).p_value < 1e-5);
    }
}
