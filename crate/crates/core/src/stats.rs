//! Self-contained statistical kernel: Wilson score intervals, paired
//! bootstrap, exact McNemar, and Holm-Bonferroni adjustment.
//!
//! Everything here is seed-deterministic. The bootstrap derives one RNG stream
//! per iteration from `(rng_seed, iteration)`, so a parallel implementation
//! would produce the same resamples as the sequential one.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("trials must be > 0")]
    ZeroTrials,
    #[error("successes ({successes}) exceed trials ({trials})")]
    SuccessesExceedTrials { successes: u64, trials: u64 },
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
}

/// A two-sided confidence interval on a proportion, clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// One paired binary outcome, keyed so pairing is explicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PairedOutcome {
    /// (model, task, seed) or any other identity the caller pairs on.
    pub key: (String, String, u64),
    pub a: bool,
    pub b: bool,
}

/// Wilson score interval for `successes` out of `trials` at critical value `z`.
///
/// The returned interval always contains the point estimate and is clamped so
/// a zero-success input yields `lo == 0.0` exactly.
pub fn wilson_ci(successes: u64, trials: u64, z: f64) -> Result<Interval, StatsError> {
    if trials == 0 {
        return Err(StatsError::ZeroTrials);
    }
    if successes > trials {
        return Err(StatsError::SuccessesExceedTrials { successes, trials });
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(Interval {
        lo: ((center - half) / denom).max(0.0),
        hi: ((center + half) / denom).min(1.0),
    })
}

/// Wilson 95% interval (z = 1.96), the CI used throughout the reports.
pub fn wilson_ci_95(successes: u64, trials: u64) -> Result<Interval, StatsError> {
    wilson_ci(successes, trials, 1.96)
}

/// Result of a paired bootstrap test on per-task score differences.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    /// Two-sided p for mean != 0: `2 * min(frac <= 0, frac >= 0)`, clipped to [0, 1].
    pub two_sided_p: f64,
    /// Percentile 95% interval over the resampled means.
    pub ci95: (f64, f64),
}

/// Paired bootstrap over per-task differences: resample tasks with
/// replacement, recompute the mean difference per iteration.
///
/// Deterministic for a given `rng_seed`; iteration `i` draws from a ChaCha8
/// stream keyed by `(rng_seed, i)`.
pub fn paired_bootstrap(
    per_task_diffs: &[f64],
    iterations: u32,
    rng_seed: u64,
) -> Result<BootstrapResult, StatsError> {
    if per_task_diffs.len() < 2 {
        return Err(StatsError::TooFewObservations(per_task_diffs.len()));
    }
    let n = per_task_diffs.len();
    let observed_mean = per_task_diffs.iter().sum::<f64>() / n as f64;

    let mut means = Vec::with_capacity(iterations as usize);
    for iter in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(iter as u64);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += per_task_diffs[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }

    let total = means.len() as f64;
    let frac_le = means.iter().filter(|m| **m <= 0.0).count() as f64 / total;
    let frac_ge = means.iter().filter(|m| **m >= 0.0).count() as f64 / total;
    let p = (2.0 * frac_le.min(frac_ge)).clamp(0.0, 1.0);

    means.sort_by(|a, b| a.partial_cmp(b).expect("bootstrap means are finite"));
    let ci95 = (percentile(&means, 0.025), percentile(&means, 0.975));

    Ok(BootstrapResult {
        mean: observed_mean,
        two_sided_p: p,
        ci95,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Exact two-sided McNemar test on the discordant counts.
///
/// `b` and `c` are the two discordant cells; the statistic is an exact
/// binomial test of `b` successes in `b + c` trials at rate 1/2, doubled for
/// two sides and capped at 1. `b = c = 0` yields 1.0.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let tail_le = binom_cdf_le(b, n);
    let tail_ge = binom_cdf_ge(b, n);
    (2.0 * tail_le.min(tail_ge)).min(1.0)
}

/// P(X <= k) for X ~ Binomial(n, 1/2).
fn binom_cdf_le(k: u64, n: u64) -> f64 {
    (0..=k).map(|i| binom_pmf_half(i, n)).sum()
}

/// P(X >= k) for X ~ Binomial(n, 1/2).
fn binom_cdf_ge(k: u64, n: u64) -> f64 {
    (k..=n).map(|i| binom_pmf_half(i, n)).sum()
}

/// C(n, k) / 2^n computed in log space to stay finite for large n.
fn binom_pmf_half(k: u64, n: u64) -> f64 {
    let ln = ln_binomial(n, k) - n as f64 * std::f64::consts::LN_2;
    ln.exp()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Holm-Bonferroni step-down adjustment.
///
/// Sorts ascending, multiplies the i-th smallest raw p by `(m - i)` (0-based),
/// enforces the running maximum, caps at 1, and returns the adjusted values in
/// the original input order.
pub fn holm_bonferroni(raw_ps: &[f64]) -> Vec<f64> {
    let m = raw_ps.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        raw_ps[a]
            .partial_cmp(&raw_ps[b])
            .expect("p-values are finite")
    });

    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0_f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = raw_ps[idx] * (m - rank) as f64;
        running_max = running_max.max(scaled);
        adjusted[idx] = running_max.min(1.0);
    }
    adjusted
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_reproduces_reference_interval() {
        // 384 grader-failing approvals out of 778 grader-failing verdicts.
        let ci = wilson_ci_95(384, 778).unwrap();
        assert!((ci.lo - 0.459).abs() < 1e-3, "lo = {}", ci.lo);
        assert!((ci.hi - 0.529).abs() < 1e-3, "hi = {}", ci.hi);
        // Frozen closed-form values, computed independently at high precision.
        assert!((ci.lo - 0.4585594455266029).abs() < 1e-12);
        assert!((ci.hi - 0.528650239913517).abs() < 1e-12);
    }

    #[test]
    fn wilson_zero_successes_is_exactly_zero() {
        let ci = wilson_ci_95(0, 20).unwrap();
        assert_eq!(ci.lo, 0.0);
        assert!(ci.hi > 0.0 && ci.hi < 0.2);
    }

    #[test]
    fn wilson_half_is_symmetric_about_center() {
        // p = 0.5 makes the Wilson center exactly 0.5; frozen closed form.
        let ci = wilson_ci_95(50, 100).unwrap();
        assert!((ci.lo - 0.40382982859014716).abs() < 1e-12);
        assert!((ci.hi - 0.5961701714098528).abs() < 1e-12);
        assert!(((ci.lo + ci.hi) / 2.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wilson_rejects_bad_input() {
        assert!(matches!(wilson_ci_95(0, 0), Err(StatsError::ZeroTrials)));
        assert!(matches!(
            wilson_ci_95(5, 3),
            Err(StatsError::SuccessesExceedTrials { .. })
        ));
    }

    #[test]
    fn mcnemar_matches_hand_computed_tails() {
        // 2 * (1/2)^10, exact in f64.
        assert!((mcnemar_exact(10, 0) - 0.001953125).abs() < 1e-12);
        assert!((mcnemar_exact(0, 10) - 0.001953125).abs() < 1e-12);
        // Hand-computed: 2 * P(X <= 2), X ~ Bin(10, 1/2) = 2 * 56/1024.
        assert!((mcnemar_exact(2, 8) - 0.109375).abs() < 1e-12);
        assert_eq!(mcnemar_exact(0, 0), 1.0);
        assert_eq!(mcnemar_exact(5, 5), 1.0);
    }

    #[test]
    fn holm_matches_step_down_by_hand() {
        // 0.038*3 = 0.114; 0.45*2 = 0.90; 0.77*1 = 0.77 -> running max 0.90.
        let adj = holm_bonferroni(&[0.038, 0.45, 0.77]);
        assert!((adj[0] - 0.114).abs() < 1e-12);
        assert!((adj[1] - 0.90).abs() < 1e-12);
        assert!((adj[2] - 0.90).abs() < 1e-12);
    }

    #[test]
    fn holm_edge_cases() {
        assert_eq!(holm_bonferroni(&[1.0]), vec![1.0]);
        let tied = holm_bonferroni(&[0.01, 0.01]);
        assert!((tied[0] - 0.02).abs() < 1e-12);
        assert!((tied[1] - 0.02).abs() < 1e-12);
        assert!(holm_bonferroni(&[]).is_empty());
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let diffs: Vec<f64> = (0..40).map(|i| (i as f64 - 19.5) / 40.0).collect();
        let a = paired_bootstrap(&diffs, 2000, 7).unwrap();
        let b = paired_bootstrap(&diffs, 2000, 7).unwrap();
        assert_eq!(a, b);
        let c = paired_bootstrap(&diffs, 2000, 8).unwrap();
        assert_ne!(a.ci95, c.ci95);
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        let zeros = vec![0.0; 30];
        let r = paired_bootstrap(&zeros, 1000, 1).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.two_sided_p, 1.0);

        let ones = vec![1.0; 30];
        let r = paired_bootstrap(&ones, 1000, 1).unwrap();
        assert!(r.two_sided_p < 0.001);
        assert!(r.ci95.0 > 0.0, "ci excludes 0: {:?}", r.ci95);
    }

    #[test]
    fn bootstrap_rejects_tiny_input() {
        assert!(matches!(
            paired_bootstrap(&[0.1], 100, 0),
            Err(StatsError::TooFewObservations(1))
        ));
    }

    #[test]
    fn bootstrap_small_mean_shift_is_non_significant() {
        // 155 per-task diffs with mean exactly +0.005 and spread sized so the
        // shift sits near one standard error: 77 symmetric pairs plus one
        // center value. The verdict (non-significant at alpha = 0.05, p in
        // the broad vicinity of 0.2) is what is checked, not a point match.
        let mut diffs = Vec::with_capacity(155);
        for _ in 0..77 {
            diffs.push(0.005 + 0.0486);
            diffs.push(0.005 - 0.0486);
        }
        diffs.push(0.005);
        assert_eq!(diffs.len(), 155);
        let r = paired_bootstrap(&diffs, 10_000, 5).unwrap();
        assert!((r.mean - 0.005).abs() < 1e-12);
        assert!(
            r.two_sided_p > 0.05,
            "non-significant verdict, p = {}",
            r.two_sided_p
        );
        assert!(
            r.two_sided_p < 0.6,
            "p = {} should stay in the vicinity",
            r.two_sided_p
        );
        assert!(r.ci95.0 < 0.0 && r.ci95.1 > 0.0, "CI straddles zero");
    }

    proptest! {
        #[test]
        fn wilson_contains_point_estimate(s in 0u64..200, extra in 1u64..200) {
            let n = s + extra;
            let ci = wilson_ci_95(s, n).unwrap();
            let p = s as f64 / n as f64;
            prop_assert!(ci.lo <= p + 1e-12 && p <= ci.hi + 1e-12);
            prop_assert!(ci.lo <= ci.hi);
            prop_assert!(ci.lo >= 0.0 && ci.hi <= 1.0);
        }

        #[test]
        fn mcnemar_is_symmetric(b in 0u64..60, c in 0u64..60) {
            let p1 = mcnemar_exact(b, c);
            let p2 = mcnemar_exact(c, b);
            prop_assert!((p1 - p2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p1));
        }

        #[test]
        fn holm_is_monotone_and_dominates_raw(ps in proptest::collection::vec(0.0f64..=1.0, 1..12)) {
            let adj = holm_bonferroni(&ps);
            // Pointwise >= raw, capped at 1.
            for (a, r) in adj.iter().zip(ps.iter()) {
                prop_assert!(*a >= *r - 1e-12);
                prop_assert!(*a <= 1.0);
            }
            // Monotone along the sorted order of raw p-values.
            let mut order: Vec<usize> = (0..ps.len()).collect();
            order.sort_by(|&a, &b| ps[a].partial_cmp(&ps[b]).unwrap());
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]] + 1e-12);
            }
        }
    }
}
