// SPDX-License-Identifier: Apache-2.0

//! Truncated nonnegative series over windows of Z, with tail bounds and a
//! three-valued convergence verdict.
//!
//! Tails come from one of two places:
//!
//! * a geometric envelope `term_k ≤ a r^{|k|}` supplied by the system
//!   (built-in examples carry these), giving the exact geometric tail;
//! * otherwise, extrapolation from the ratios of the outermost terms.
//!
//! A side whose outermost terms are non-decreasing moving outward is a
//! divergence witness, as is a partial sum beyond the explosion cap.

use serde::{Deserialize, Serialize};

/// Default number of outermost terms used for witnesses and ratios.
pub const OUTER_TERMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Divergent,
    Inconclusive,
}

impl Verdict {
    /// Worst of two verdicts: divergent beats inconclusive beats converged.
    pub fn worst(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Divergent, _) | (_, Divergent) => Divergent,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// Closed window, no tail.
    Closed,
    Envelope,
    RatioExtrapolation,
    None,
}

/// `term_k ≤ coeff · ratio^{|k|}` for every index `k` of the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomEnvelope {
    pub coeff: f64,
    pub ratio: f64,
}

impl GeomEnvelope {
    pub fn new(coeff: f64, ratio: f64) -> Self {
        Self { coeff, ratio }
    }

    pub fn bound(&self, k: i64) -> f64 {
        self.coeff * self.ratio.powi(k.unsigned_abs().min(i32::MAX as u64) as i32)
    }

    /// `Σ_{k > hi} coeff · ratio^{|k|}`.
    pub fn tail_above(&self, hi: i64) -> f64 {
        let q = self.ratio;
        if self.coeff == 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return f64::INFINITY;
        }
        let nonneg = |from: i64| q.powi(from as i32) / (1.0 - q);
        if hi >= 0 {
            self.coeff * nonneg(hi + 1)
        } else {
            // k = hi+1 .. -1 contributes q^1 .. q^{-hi-1}
            let m = (-hi - 1) as i32;
            let negative_part = if m == 0 {
                0.0
            } else {
                q * (1.0 - q.powi(m)) / (1.0 - q)
            };
            self.coeff * (negative_part + nonneg(0))
        }
    }

    /// `Σ_{k < lo} coeff · ratio^{|k|}`.
    pub fn tail_below(&self, lo: i64) -> f64 {
        self.tail_above(-lo)
    }
}

/// Which of a system's series an envelope is requested for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// `|𝒢(n, k+1)| μ_k` over k, centred at n (the `h̄_n` series and N).
    Mu,
    /// `|𝒢(n, k+1)| γ_k` over k, centred at n (the q sum).
    Gamma,
    /// `|𝒢(n, k+1)| γ_k C_{k,n}` over k (the K_n and J_n terms).
    FirstVar,
    /// `|𝒢(n, k+1)| (γ_k M_{k,n} + ρ_k D_{k,n})` over k.
    SecondVar,
}

/// Analytic term envelopes supplied by a system.
pub trait TailEnvelopes: Send + Sync {
    fn envelope(&self, kind: SeriesKind, center: i64) -> Option<GeomEnvelope>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub explosion_cap: f64,
    pub outer_terms: usize,
    /// Ratio at or above which extrapolation is refused.
    pub ratio_cutoff: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            explosion_cap: 1e6,
            outer_terms: OUTER_TERMS,
            ratio_cutoff: 0.999,
        }
    }
}

/// Partial sum, tail bound and verdict for one truncated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEstimate {
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub verdict: Verdict,
    pub window: (i64, i64),
    pub terms_inspected: usize,
    pub tail_method: TailMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub envelope_violation: bool,
}

impl SeriesEstimate {
    /// `partial_sum + tail_bound` for converged series.
    pub fn upper(&self) -> Option<f64> {
        match (self.verdict, self.tail_bound) {
            (Verdict::Converged, Some(t)) => Some(self.partial_sum + t),
            _ => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.verdict == Verdict::Converged
    }

    /// The sup over a family of series, bounded componentwise:
    /// max of partial sums, max of tails, worst verdict.
    pub fn sup<'a>(items: impl IntoIterator<Item = &'a SeriesEstimate>) -> Option<SeriesEstimate> {
        let mut iter = items.into_iter();
        let mut acc = iter.next()?.clone();
        for s in iter {
            acc.partial_sum = acc.partial_sum.max(s.partial_sum);
            acc.tail_bound = match (acc.tail_bound, s.tail_bound) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
            acc.verdict = acc.verdict.worst(s.verdict);
            acc.window = (acc.window.0.min(s.window.0), acc.window.1.max(s.window.1));
            acc.terms_inspected += s.terms_inspected;
            if acc.witness.is_none() {
                acc.witness = s.witness.clone();
            }
            acc.envelope_violation |= s.envelope_violation;
            if acc.tail_method != s.tail_method {
                acc.tail_method = match (acc.tail_method, s.tail_method) {
                    (TailMethod::None, _) | (_, TailMethod::None) => TailMethod::None,
                    (TailMethod::RatioExtrapolation, _) | (_, TailMethod::RatioExtrapolation) => {
                        TailMethod::RatioExtrapolation
                    }
                    (a, _) => a,
                };
            }
        }
        if acc.verdict != Verdict::Converged {
            acc.tail_bound = acc.tail_bound.filter(|_| acc.verdict == Verdict::Converged);
        }
        Some(acc)
    }
}

/// One truncated series: `terms[i]` is the term at index `lo + i`.
#[derive(Debug, Clone)]
pub struct SeriesInput<'a> {
    pub lo: i64,
    pub terms: &'a [f64],
    /// The true series continues below `lo`.
    pub left_open: bool,
    /// The true series continues above `lo + terms.len() - 1`.
    pub right_open: bool,
    pub envelope: Option<GeomEnvelope>,
}

impl SeriesInput<'_> {
    fn hi(&self) -> i64 {
        self.lo + self.terms.len() as i64 - 1
    }
}

pub fn estimate(input: &SeriesInput<'_>, cfg: &SeriesConfig) -> SeriesEstimate {
    let terms = input.terms;
    let window = (input.lo, input.hi());
    let partial: f64 = terms.iter().sum();
    let mut out = SeriesEstimate {
        partial_sum: partial,
        tail_bound: None,
        verdict: Verdict::Inconclusive,
        window,
        terms_inspected: terms.len(),
        tail_method: TailMethod::None,
        witness: None,
        envelope_violation: false,
    };

    if terms.iter().any(|t| t.is_nan() || *t < 0.0) {
        out.witness = Some("non-finite or negative term".into());
        return out;
    }
    if !partial.is_finite() || partial > cfg.explosion_cap {
        out.verdict = Verdict::Divergent;
        out.witness = Some(format!(
            "partial sum {partial:e} exceeds explosion cap {:e}",
            cfg.explosion_cap
        ));
        return out;
    }
    if !input.left_open && !input.right_open {
        out.verdict = Verdict::Converged;
        out.tail_bound = Some(0.0);
        out.tail_method = TailMethod::Closed;
        return out;
    }

    if let Some(env) = input.envelope.filter(|e| e.ratio < 1.0 && e.coeff.is_finite()) {
        let dominated = terms.iter().enumerate().all(|(i, t)| {
            let b = env.bound(input.lo + i as i64);
            *t <= b * (1.0 + 1e-9) + f64::MIN_POSITIVE
        });
        if dominated {
            let mut tail = 0.0;
            if input.left_open {
                tail += env.tail_below(window.0);
            }
            if input.right_open {
                tail += env.tail_above(window.1);
            }
            out.tail_bound = Some(tail);
            out.tail_method = TailMethod::Envelope;
            out.verdict = Verdict::Converged;
            return out;
        }
        out.envelope_violation = true;
    }

    // Each open side, listed from the window centre towards its edge.
    let mut sides: Vec<(&str, Vec<f64>)> = Vec::new();
    if input.left_open {
        sides.push(("left", terms.iter().rev().copied().collect()));
    }
    if input.right_open {
        sides.push(("right", terms.to_vec()));
    }

    for (name, outward) in &sides {
        if let Some(w) = divergence_witness(outward, cfg.outer_terms) {
            out.verdict = Verdict::Divergent;
            out.witness = Some(format!("{name} side: {w}"));
            return out;
        }
    }

    let mut tail = 0.0;
    for (_, outward) in &sides {
        match ratio_tail(outward, cfg) {
            Some(t) => tail += t,
            None => return out,
        }
    }
    out.tail_bound = Some(tail);
    out.tail_method = TailMethod::RatioExtrapolation;
    out.verdict = Verdict::Converged;
    out
}

/// `outward` lists one side's terms from the centre to the window edge.
fn divergence_witness(outward: &[f64], len: usize) -> Option<String> {
    if len < 2 || outward.len() < len {
        return None;
    }
    let tail = &outward[outward.len() - len..];
    let last = *tail.last()?;
    if last > 0.0 && tail.windows(2).all(|w| w[1] >= w[0]) {
        Some(format!(
            "outermost {len} terms non-decreasing ({:e} .. {:e})",
            tail[0], last
        ))
    } else {
        None
    }
}

fn ratio_tail(outward: &[f64], cfg: &SeriesConfig) -> Option<f64> {
    let take = cfg.outer_terms.min(outward.len());
    if take < 2 {
        return None;
    }
    let tail = &outward[outward.len() - take..];
    if tail.iter().all(|t| *t == 0.0) {
        return Some(0.0);
    }
    let mut rmax = 0.0_f64;
    for w in tail.windows(2) {
        if w[0] == 0.0 {
            if w[1] > 0.0 {
                return None;
            }
            continue;
        }
        rmax = rmax.max(w[1] / w[0]);
    }
    if rmax >= cfg.ratio_cutoff {
        return None;
    }
    let last = *tail.last()?;
    Some(last * rmax / (1.0 - rmax))
}
