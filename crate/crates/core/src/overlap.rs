//! Expert overlap, the uniform-routing baseline and the chance-corrected score.
//!
//! Two independent uniform draws of `k` experts out of `N` share `k²/N`
//! experts on average: each of the `k` experts in the second draw lands in the
//! first with probability `k/N`. The normalized score rescales an observed
//! overlap `o` so that chance agreement maps to 0 and identical routing to 1:
//!
//! ```text
//! score = (o - k²/N) / (k - k²/N) = (P_o - P_e) / (1 - P_e),  P_o = o/k, P_e = k/N
//! ```
//!
//! which is Cohen's kappa with the uniform baseline. All quantities refer to
//! the routed pool; shared experts always match and are excluded.

use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_model::{RoutingTrace, TokenRouting};

/// `|a ∩ b|` for two routed expert sets of equal size.
pub fn overlap_count(a: &[u32], b: &[u32]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("expert sets differ in size ({} vs {})", a.len(), b.len())));
    }
    // k is small (at most a few dozen), a quadratic scan beats hashing here.
    Ok(a.iter().filter(|e| b.contains(e)).count())
}

fn check_kn(k: u32, n: u32) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= N, got k = {k}, N = {n}")));
    }
    Ok(())
}

/// Expected overlap `k²/N` of two independent uniform `k`-subsets of `N`.
pub fn expected_overlap(k: u32, n: u32) -> Result<f64> {
    check_kn(k, n)?;
    // k² and N are exact in f64, so the quotient is correctly rounded.
    Ok(f64::from(k) * f64::from(k) / f64::from(n))
}

pub fn expected_overlap_exact(k: u32, n: u32) -> Result<Ratio<i128>> {
    check_kn(k, n)?;
    Ok(Ratio::new(i128::from(k) * i128::from(k), i128::from(n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub score: f64,
    /// Observed agreement `o/k`.
    pub p_o: f64,
    /// Expected agreement `k/N`.
    pub p_e: f64,
}

/// Chance-corrected score for a (possibly span-averaged) overlap `o`.
pub fn normalized_score(o: f64, k: u32, n: u32) -> Result<NormalizedScore> {
    check_kn(k, n)?;
    if k == n {
        return Err(Error::DegenerateBaseline(k));
    }
    let kf = f64::from(k);
    if !(0.0..=kf).contains(&o) {
        return Err(Error::invalid(format!("overlap {o} outside [0, {k}]")));
    }
    let expected = kf * kf / f64::from(n);
    Ok(NormalizedScore { score: (o - expected) / (kf - expected), p_o: o / kf, p_e: kf / f64::from(n) })
}

/// Exact rational form of [`normalized_score`].
pub fn normalized_score_exact(o: Ratio<i128>, k: u32, n: u32) -> Result<Ratio<i128>> {
    check_kn(k, n)?;
    if k == n {
        return Err(Error::DegenerateBaseline(k));
    }
    let expected = expected_overlap_exact(k, n)?;
    Ok((o - expected) / (Ratio::from_integer(i128::from(k)) - expected))
}

/// Lower bound of the score, reached at `o = 0`: `-k/(N-k)`.
pub fn score_floor(k: u32, n: u32) -> f64 {
    -f64::from(k) / f64::from(n - k)
}

/// How target-span token positions are aligned between two traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanPolicy {
    /// Compare the final token of each target span.
    #[default]
    LastToken,
    /// Average the overlap position by position across the span; falls back
    /// to [`SpanPolicy::LastToken`] when span lengths differ.
    MeanOverSpan,
}

impl FromStr for SpanPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last-token" => Ok(SpanPolicy::LastToken),
            "mean-over-span" => Ok(SpanPolicy::MeanOverSpan),
            other => {
                Err(Error::invalid(format!("unknown span policy {other:?} (expected last-token or mean-over-span)")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub layer: u32,
    /// Observed overlap, averaged over aligned span positions.
    pub overlap: f64,
    pub score: NormalizedScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    pub layers: Vec<LayerScore>,
    /// The policy actually applied (after any fallback).
    pub applied_policy: SpanPolicy,
}

impl PairScores {
    pub fn mean_score(&self) -> f64 {
        self.layers.iter().map(|l| l.score.score).sum::<f64>() / self.layers.len() as f64
    }
}

/// Per-layer overlap and normalized score between the target spans of two
/// traces of the same model.
pub fn pair_layer_scores(a: &RoutingTrace, b: &RoutingTrace, policy: SpanPolicy) -> Result<PairScores> {
    if a.meta != b.meta {
        return Err(Error::invalid(format!(
            "traces {} and {} come from different models ({} vs {})",
            a.record_label(),
            b.record_label(),
            a.meta.model_id,
            b.meta.model_id
        )));
    }
    for trace in [a, b] {
        if trace.target_span.is_empty() {
            return Err(Error::invalid(format!("trace {} has an empty target span", trace.record_label())));
        }
    }
    let k = a.meta.routed_active;
    let n = a.meta.total_experts;
    let applied = match policy {
        SpanPolicy::MeanOverSpan if a.target_span.len() == b.target_span.len() => SpanPolicy::MeanOverSpan,
        _ => SpanPolicy::LastToken,
    };
    let positions: Vec<(usize, usize)> = match applied {
        SpanPolicy::LastToken => vec![(a.target_span.end as usize, b.target_span.end as usize)],
        SpanPolicy::MeanOverSpan => a.target_span.positions().zip(b.target_span.positions()).collect(),
    };
    let mut layers = Vec::with_capacity(a.layers.len());
    for (&layer, tokens_a) in &a.layers {
        let tokens_b =
            b.layer(layer).ok_or_else(|| Error::invalid(format!("trace {} lacks layer {layer}", b.record_label())))?;
        let mut total = 0usize;
        for &(pa, pb) in &positions {
            let ea = fetch(tokens_a, pa, a.record_label())?;
            let eb = fetch(tokens_b, pb, b.record_label())?;
            total += overlap_count(ea, eb)?;
        }
        let overlap = total as f64 / positions.len() as f64;
        layers.push(LayerScore { layer, overlap, score: normalized_score(overlap, k, n)? });
    }
    if layers.len() != b.layers.len() {
        return Err(Error::invalid(format!(
            "traces {} and {} cover different layers",
            a.record_label(),
            b.record_label()
        )));
    }
    Ok(PairScores { layers, applied_policy: applied })
}

fn fetch(tokens: &[TokenRouting], at: usize, label: String) -> Result<&[u32]> {
    tokens
        .get(at)
        .map(|t| t.routed_experts.as_slice())
        .ok_or_else(|| Error::invalid(format!("trace {label}: span position {at} out of range")))
}
