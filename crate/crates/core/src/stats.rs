//! Significance tests for paired condition differences.
//!
//! Differences are always oriented meaning-preserving minus meaning-changing,
//! so the default one-sided alternative is "mean difference > 0".

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Mean difference greater than zero.
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    TPairedOneSided,
    TPairedTwoSided,
    SignFlipPermutation,
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(Alternative::Greater),
            "two-sided" | "two_sided" => Ok(Alternative::TwoSided),
            other => Err(Error::invalid(format!("unknown alternative {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    pub alternative: Alternative,
    /// t statistic, or the observed mean difference for the permutation test.
    /// Infinite for a zero-variance t-test with non-zero mean.
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Degrees of freedom (t-test only).
    pub df: Option<f64>,
    /// Zero sample variance: the p-value is decided by the sign of the mean.
    pub degenerate: bool,
    /// Number of sign patterns the permutation p-value is based on.
    pub resamples: Option<u64>,
    /// Whether every sign pattern was enumerated.
    pub exact: Option<bool>,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n < 2.
    pub sd: f64,
    pub se: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { n, mean: f64::NAN, sd: f64::NAN, se: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Summary { n, mean, sd: 0.0, se: 0.0 };
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let sd = (ss / (n - 1) as f64).sqrt();
    Summary { n, mean, sd, se: sd / (n as f64).sqrt() }
}

fn check_finite(diffs: &[f64]) -> Result<()> {
    if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
        return Err(Error::invalid(format!("difference {i} is not finite ({})", diffs[i])));
    }
    Ok(())
}

/// One-sided paired t-test with alternative "mean difference > 0".
pub fn paired_t_one_sided(diffs: &[f64]) -> Result<TestResult> {
    paired_t(diffs, Alternative::Greater)
}

pub fn paired_t(diffs: &[f64], alternative: Alternative) -> Result<TestResult> {
    if diffs.len() < 2 {
        return Err(Error::invalid(format!("paired t-test needs n >= 2, got {}", diffs.len())));
    }
    check_finite(diffs)?;
    let summary = summarize(diffs);
    let n = diffs.len();
    let df = (n - 1) as f64;
    let method = match alternative {
        Alternative::Greater => TestMethod::TPairedOneSided,
        Alternative::TwoSided => TestMethod::TPairedTwoSided,
    };
    // Exact zero variance only: every difference identical.
    if diffs.iter().all(|d| *d == diffs[0]) {
        let mean = diffs[0];
        let (statistic, p_value) = match (alternative, mean.partial_cmp(&0.0)) {
            (_, Some(std::cmp::Ordering::Equal)) | (_, None) => {
                (0.0, if alternative == Alternative::Greater { 0.5 } else { 1.0 })
            }
            (Alternative::Greater, Some(std::cmp::Ordering::Greater)) => (f64::INFINITY, 0.0),
            (Alternative::Greater, Some(std::cmp::Ordering::Less)) => (f64::NEG_INFINITY, 1.0),
            (Alternative::TwoSided, Some(ordering)) => {
                (if ordering.is_gt() { f64::INFINITY } else { f64::NEG_INFINITY }, 0.0)
            }
        };
        return Ok(TestResult {
            method,
            alternative,
            statistic,
            p_value,
            n,
            df: Some(df),
            degenerate: true,
            resamples: None,
            exact: None,
        });
    }
    let t = summary.mean / summary.se;
    let p_value = match alternative {
        Alternative::Greater => student_t_sf(t, df),
        Alternative::TwoSided => (2.0 * student_t_sf(t.abs(), df)).min(1.0),
    };
    Ok(TestResult {
        method,
        alternative,
        statistic: t,
        p_value,
        n,
        df: Some(df),
        degenerate: false,
        resamples: None,
        exact: None,
    })
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms), x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    let t = x + 7.5;
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via its continued fraction
/// (modified Lentz), using the symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)` to stay
/// in the fast-converging region.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Resampling plan for [`sign_flip_permutation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationConfig {
    /// Random sign patterns drawn when exact enumeration is not used.
    pub n_resamples: u64,
    /// Enumerate all `2^n` patterns whenever `2^n` is at most this many.
    pub exact_cap: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig { n_resamples: 10_000, exact_cap: 1 << 20 }
    }
}

const BLOCK: u64 = 1024;

/// Sign-flip permutation test of the mean difference.
///
/// `p = (1 + c) / (1 + R)` where `R` is the number of sign patterns examined
/// and `c` the number whose mean reaches the observed one. In exact mode the
/// `R = 2^n` patterns include the identity, so `c >= 1`.
pub fn sign_flip_permutation(
    diffs: &[f64],
    config: PermutationConfig,
    alternative: Alternative,
    seed: u64,
) -> Result<TestResult> {
    if diffs.is_empty() {
        return Err(Error::invalid("permutation test needs at least one difference"));
    }
    check_finite(diffs)?;
    let n = diffs.len();
    let observed_sum: f64 = diffs.iter().sum();
    let scale: f64 = diffs.iter().map(|d| d.abs()).sum();
    let tolerance = 1e-10 * scale;
    let reaches = |sum: f64| match alternative {
        Alternative::Greater => sum >= observed_sum - tolerance,
        Alternative::TwoSided => sum.abs() >= observed_sum.abs() - tolerance,
    };
    let exact = n < 64 && (1u64 << n) <= config.exact_cap;
    let (count, resamples) = if exact {
        (enumerate_sign_patterns(diffs, &reaches), 1u64 << n)
    } else {
        if config.n_resamples == 0 {
            return Err(Error::invalid("n_resamples must be at least 1"));
        }
        let blocks = config.n_resamples.div_ceil(BLOCK);
        let count = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let mut rng = ChaCha8Rng::seed_from_u64(block_seed(seed, block));
                let todo = BLOCK.min(config.n_resamples - block * BLOCK);
                (0..todo)
                    .filter(|_| {
                        let sum: f64 = diffs.iter().map(|&d| if rng.random::<bool>() { d } else { -d }).sum();
                        reaches(sum)
                    })
                    .count() as u64
            })
            .sum::<u64>();
        (count, config.n_resamples)
    };
    Ok(TestResult {
        method: TestMethod::SignFlipPermutation,
        alternative,
        statistic: observed_sum / n as f64,
        p_value: (1 + count) as f64 / (1 + resamples) as f64,
        n,
        df: None,
        degenerate: false,
        resamples: Some(resamples),
        exact: Some(exact),
    })
}

/// Counts sign patterns whose sum satisfies `reaches`, walking all `2^n`
/// patterns in Gray-code order so each step flips a single sign.
fn enumerate_sign_patterns(diffs: &[f64], reaches: &impl Fn(f64) -> bool) -> u64 {
    let n = diffs.len();
    let mut signs = vec![1.0f64; n];
    let mut sum: f64 = diffs.iter().sum();
    let mut count = u64::from(reaches(sum));
    for step in 1u64..(1u64 << n) {
        let bit = step.trailing_zeros() as usize;
        signs[bit] = -signs[bit];
        sum += 2.0 * signs[bit] * diffs[bit];
        if step % 4096 == 0 {
            // Resynchronize to keep rounding drift bounded.
            sum = diffs.iter().zip(&signs).map(|(d, s)| d * s).sum();
        }
        count += u64::from(reaches(sum));
    }
    count
}

fn block_seed(seed: u64, block: u64) -> u64 {
    // splitmix64 finalizer over the (seed, block) pair
    let mut z = seed ^ block.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `values` and Uniform(0, 1).
pub fn ks_distance_uniform(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - p).max(p - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(100.5) - 361.435_540_467_777_6).abs() < 1e-10);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1 - x)^b and I_x(a, 1) = x^a
        for &x in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            let lhs = regularized_incomplete_beta(1.0, 3.5, x);
            assert!((lhs - (1.0 - (1.0 - x).powf(3.5))).abs() < 1e-13, "{x}");
            let lhs = regularized_incomplete_beta(2.5, 1.0, x);
            assert!((lhs - x.powf(2.5)).abs() < 1e-13, "{x}");
        }
    }

    #[test]
    fn t_test_worked_example() {
        let result = paired_t_one_sided(&[1.0, 2.0, 3.0]).unwrap();
        assert!((result.statistic - 12f64.sqrt()).abs() < 1e-12);
        // df = 2 closed form: P(T > t) = (1 - t / sqrt(t^2 + 2)) / 2
        let t = result.statistic;
        let closed = 0.5 * (1.0 - t / (t * t + 2.0).sqrt());
        assert!((result.p_value - closed).abs() < 1e-12);
        assert!((result.p_value - 0.0371).abs() < 5e-5);

        let flipped = paired_t_one_sided(&[-1.0, -2.0, -3.0]).unwrap();
        assert!((flipped.p_value - (1.0 - closed)).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let zero = paired_t_one_sided(&[0.0; 4]).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.p_value, 0.5);
        assert_eq!(paired_t_one_sided(&[0.3; 5]).unwrap().p_value, 0.0);
        assert_eq!(paired_t_one_sided(&[-0.3; 5]).unwrap().p_value, 1.0);
        assert!(paired_t_one_sided(&[1.0]).is_err());
        assert!(paired_t_one_sided(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn two_sided_doubles_the_tail() {
        let diffs = [0.4, -0.1, 0.8, 0.3, 0.05];
        let one = paired_t(&diffs, Alternative::Greater).unwrap();
        let two = paired_t(&diffs, Alternative::TwoSided).unwrap();
        assert!((two.p_value - 2.0 * one.p_value).abs() < 1e-14);
    }

    #[test]
    fn permutation_small_exact_cases() {
        let cfg = PermutationConfig::default();
        let single = sign_flip_permutation(&[1.0], cfg, Alternative::Greater, 0).unwrap();
        assert!((single.p_value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(single.exact, Some(true));

        let ones = sign_flip_permutation(&[1.0; 10], cfg, Alternative::Greater, 0).unwrap();
        assert!((ones.p_value - 2.0 / 1025.0).abs() < 1e-15);

        let zeros = sign_flip_permutation(&[0.0; 6], cfg, Alternative::Greater, 0).unwrap();
        assert_eq!(zeros.p_value, 1.0);
    }

    #[test]
    fn monte_carlo_is_seeded_and_bounded() {
        let diffs: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 / 10.0 - 0.3).collect();
        let cfg = PermutationConfig { n_resamples: 5_000, exact_cap: 1 << 10 };
        let a = sign_flip_permutation(&diffs, cfg, Alternative::Greater, 42).unwrap();
        let b = sign_flip_permutation(&diffs, cfg, Alternative::Greater, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.exact, Some(false));
        assert!(a.p_value >= 1.0 / 5_001.0 && a.p_value <= 1.0);
    }

    #[test]
    fn ks_distance_of_a_perfect_grid() {
        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance_uniform(&grid) - 0.005).abs() < 1e-12);
        assert!((ks_distance_uniform(&[0.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
