// SPDX-License-Identifier: Apache-2.0

//! Numerical certification of the summability, contraction and Lipschitz
//! conditions behind the conjugacies.
//!
//! Condition names follow the usual labels:
//!
//! * BC1 `|f_n| ≤ μ_n`, `Lip_x f_n ≤ γ_n` (sampled);
//! * BC2 `N = sup_m Σ_k |𝒢(m,k+1)| μ_k < ∞`;
//! * BC3 `q = sup_m Σ_k |𝒢(m,k+1)| γ_k < 1`;
//! * BC4 `|A_n^{-1}| γ_n < 1`;
//! * AC2/AC3 `K_n`, `J_n` finite and `K_n + J_n + |𝒢(n,n+1)| γ_n < 1`;
//! * AC4/AC5 `Lip_y f_n ≤ ρ_n`, driver constants `τ_n`, `σ_n` (sampled);
//! * AC6 `σ_n ρ_n ≤ 1`;
//! * AC9 `Σ_k |𝒢(n,k+1)| (γ_k M_{k,n} + ρ_k D_{k,n}) < ∞`.
//!
//! Every sup over `n` is a max over the configured window and the report
//! says which window that was.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::KernelRow;
use crate::linalg::{operator_norm, vector_norm};
use crate::sampling::{random_vector, rng};
use crate::series::{SeriesConfig, SeriesEstimate, Verdict};
use crate::system::SystemSpec;

/// Relative slack allowed when comparing sampled constants to declared ones.
pub const SAMPLE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisConfig {
    pub n_range: (i64, i64),
    pub half_width: u32,
    /// Random probe pairs for the sampled conditions.
    pub probes: usize,
    pub probe_radius: f64,
    pub seed: u64,
    pub series: SeriesConfig,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            n_range: (-10, 10),
            half_width: 40,
            probes: 200,
            probe_radius: 3.0,
            seed: 0,
            series: SeriesConfig::default(),
        }
    }
}

/// One sampled inequality `observed ≤ declared`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledBound {
    pub ok: bool,
    pub samples: usize,
    /// Largest `observed / declared` seen (1 means tight).
    pub worst_ratio: f64,
    pub worst_index: Option<i64>,
}

impl SampledBound {
    fn new() -> Self {
        Self {
            ok: true,
            samples: 0,
            worst_ratio: 0.0,
            worst_index: None,
        }
    }

    fn record(&mut self, n: i64, observed: f64, declared: f64) {
        self.samples += 1;
        let ok = observed <= declared * (1.0 + SAMPLE_SLACK) + 1e-15;
        let ratio = if declared > 0.0 {
            observed / declared
        } else if observed > 1e-15 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > self.worst_ratio || (!ok && self.ok) {
            self.worst_ratio = ratio.max(self.worst_ratio);
            self.worst_index = Some(n);
        }
        self.ok &= ok;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledConstants {
    /// `|f_n(x,y)| ≤ μ_n`.
    pub bound: SampledBound,
    /// `|f_n(x,y) − f_n(x',y)| ≤ γ_n |x − x'|`.
    pub lip_x: SampledBound,
    /// `|∂f_n/∂x| ≤ γ_n`.
    pub jac_x: SampledBound,
    /// `|f_n(x,y) − f_n(x,y')| ≤ ρ_n |y − y'|`.
    pub lip_y: SampledBound,
    pub jac_y: SampledBound,
    pub driver_tau: SampledBound,
    pub driver_sigma: SampledBound,
    /// `|g_n^{-1}(g_n(y)) − y|`, compared against `1e-12 max(1, |y|)`.
    pub driver_inverse: SampledBound,
}

impl SampledConstants {
    pub fn bc1_ok(&self) -> bool {
        self.bound.ok && self.lip_x.ok && self.jac_x.ok
    }

    pub fn ac4_ok(&self) -> bool {
        self.lip_y.ok && self.jac_y.ok
    }

    pub fn ac5_ok(&self) -> bool {
        self.driver_tau.ok && self.driver_sigma.ok && self.driver_inverse.ok
    }
}

/// A pointwise condition over a range of indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedBound {
    pub ok: bool,
    pub range: (i64, i64),
    pub worst_index: Option<i64>,
    pub worst_value: f64,
    pub limit: f64,
}

/// `K_n`, `J_n` and the AC3 decision at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvancedFirst {
    pub n: i64,
    pub k: SeriesEstimate,
    pub j: SeriesEstimate,
    /// `|𝒢(n,n+1)| γ_n`.
    pub center: f64,
    /// Upper bound on `K_n + J_n + |𝒢(n,n+1)| γ_n` when both series converge.
    pub total_upper: Option<f64>,
    pub ac3: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicReport {
    pub n_range: (i64, i64),
    pub half_width: u32,
    pub sampled: SampledConstants,
    pub bc1_sampled_ok: bool,
    /// N.
    pub bc2: SeriesEstimate,
    /// q.
    pub bc3: SeriesEstimate,
    pub q_below_one: bool,
    pub bc4: IndexedBound,
    /// `max |P_n|` over the indices touched. Unbounded weights are reported,
    /// not rejected.
    pub weights_sup: f64,
}

impl BasicReport {
    pub fn ok(&self) -> bool {
        self.bc1_sampled_ok
            && self.bc2.verdict == Verdict::Converged
            && self.q_below_one
            && self.bc4.ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    #[serde(flatten)]
    pub basic: BasicReport,
    pub ac2: BTreeMap<i64, AdvancedFirst>,
    pub ac3: BTreeMap<i64, bool>,
    pub ac4_sampled_ok: bool,
    pub ac5_sampled_ok: bool,
    pub ac6: IndexedBound,
    pub ac9: BTreeMap<i64, SeriesEstimate>,
    /// Per-index failures that prevented a check from running.
    pub errors: BTreeMap<i64, String>,
}

impl HypothesisReport {
    /// Every first-variable condition holds at every `n` of the window.
    pub fn ac3_all(&self) -> bool {
        !self.ac3.is_empty() && self.ac3.values().all(|b| *b)
    }

    pub fn ac9_all(&self) -> bool {
        !self.ac9.is_empty() && self.ac9.values().all(|s| s.is_converged())
    }

    /// Basic conditions, AC3 everywhere, and the second-variable
    /// conditions when Y is nontrivial.
    pub fn pass(&self, second_variable: bool) -> bool {
        let second = !second_variable || (self.ac4_sampled_ok && self.ac5_sampled_ok && self.ac6.ok && self.ac9_all());
        self.basic.ok() && self.ac3_all() && self.errors.is_empty() && second
    }

    /// The first divergence witness among the J-series, if any.
    pub fn j_witness(&self) -> Option<(i64, String)> {
        self.ac2.values().find_map(|a| {
            (a.j.verdict == Verdict::Divergent).then(|| (a.n, a.j.witness.clone().unwrap_or_default()))
        })
    }
}

/// Samples BC1, AC4 and AC5 at random points.
pub fn sample_constants(sys: &SystemSpec, cfg: &HypothesisConfig) -> SampledConstants {
    let mut r = rng(cfg.seed ^ 0x5eed_0bc1);
    let kind = sys.norm_kind();
    let (dx, dy) = (sys.dim_x(), sys.dim_y());
    let (lo, hi) = cfg.n_range;
    let mut out = SampledConstants {
        bound: SampledBound::new(),
        lip_x: SampledBound::new(),
        jac_x: SampledBound::new(),
        lip_y: SampledBound::new(),
        jac_y: SampledBound::new(),
        driver_tau: SampledBound::new(),
        driver_sigma: SampledBound::new(),
        driver_inverse: SampledBound::new(),
    };
    let span = (hi - lo + 1).max(1) as usize;
    for i in 0..cfg.probes {
        let n = lo + (i % span) as i64;
        let x = random_vector(&mut r, dx, cfg.probe_radius);
        let x2 = random_vector(&mut r, dx, cfg.probe_radius);
        let y = random_vector(&mut r, dy, cfg.probe_radius);
        let y2 = random_vector(&mut r, dy, cfg.probe_radius);
        let fx = sys.f.eval(n, &x, &y);
        out.bound.record(n, vector_norm(&fx, kind), sys.f.mu(n));
        let dxn = vector_norm(&(&x - &x2), kind);
        let dfx = vector_norm(&(&fx - sys.f.eval(n, &x2, &y)), kind);
        if dxn > 0.0 {
            out.lip_x.record(n, dfx / dxn, sys.f.gamma(n));
        }
        out.jac_x.record(n, operator_norm(&sys.f.jac_x(n, &x, &y), kind), sys.f.gamma(n));
        if dy == 0 {
            continue;
        }
        let dyn_ = vector_norm(&(&y - &y2), kind);
        if dyn_ > 0.0 {
            let dfy = vector_norm(&(&fx - sys.f.eval(n, &x, &y2)), kind);
            out.lip_y.record(n, dfy / dyn_, sys.f.rho(n));
            let dg = vector_norm(&(sys.g.eval(n, &y) - sys.g.eval(n, &y2)), kind);
            out.driver_tau.record(n, dg / dyn_, sys.g.tau(n));
            let dgi = vector_norm(&(sys.g.eval_inv(n, &y) - sys.g.eval_inv(n, &y2)), kind);
            out.driver_sigma.record(n, dgi / dyn_, sys.g.sigma(n));
        }
        out.jac_y.record(n, operator_norm(&sys.f.jac_y(n, &x, &y), kind), sys.f.rho(n));
        let back = sys.g.eval_inv(n, &sys.g.eval(n, &y));
        let scale = vector_norm(&y, kind).max(1.0);
        out.driver_inverse.record(n, vector_norm(&(back - &y), kind) / scale, 1e-12);
    }
    out
}

fn indexed_bound(
    range: (i64, i64),
    limit: f64,
    strict: bool,
    value: impl Fn(i64) -> Result<f64>,
) -> IndexedBound {
    let mut out = IndexedBound {
        ok: true,
        range,
        worst_index: None,
        worst_value: f64::NEG_INFINITY,
        limit,
    };
    for n in range.0..=range.1 {
        let v = value(n).unwrap_or(f64::INFINITY);
        if v > out.worst_value || out.worst_index.is_none() {
            out.worst_value = v;
            out.worst_index = Some(n);
        }
        let holds = if strict { v < limit } else { v <= limit };
        out.ok &= holds;
    }
    out
}

fn touched_range(cfg: &HypothesisConfig) -> (i64, i64) {
    let k = cfg.half_width as i64;
    (cfg.n_range.0 - k, cfg.n_range.1 + k)
}

/// BC4 over every index the window's rows touch.
pub fn check_bc4(sys: &SystemSpec, range: (i64, i64)) -> IndexedBound {
    indexed_bound(range, 1.0, true, |n| sys.backward_contraction(n))
}

/// AC6 `σ_n ρ_n ≤ 1` over `range`.
pub fn check_ac6(sys: &SystemSpec, range: (i64, i64)) -> IndexedBound {
    indexed_bound(range, 1.0, false, |n| Ok(sys.g.sigma(n) * sys.f.rho(n)))
}

fn build_rows(sys: &SystemSpec, cfg: &HypothesisConfig) -> Vec<(i64, Result<KernelRow>)> {
    let (lo, hi) = cfg.n_range;
    (lo..=hi)
        .into_par_iter()
        .map(|n| (n, KernelRow::build(sys, n, cfg.half_width)))
        .collect()
}

fn basic_from_rows(
    sys: &SystemSpec,
    cfg: &HypothesisConfig,
    rows: &[(i64, Result<KernelRow>)],
    sampled: SampledConstants,
) -> BasicReport {
    let k = cfg.half_width;
    let mut mus = Vec::new();
    let mut gammas = Vec::new();
    for (_, row) in rows {
        if let Ok(row) = row {
            mus.push(row.mu_series(sys, k, &cfg.series));
            gammas.push(row.gamma_series(sys, k, &cfg.series));
        }
    }
    let failed = rows.len() - mus.len();
    let mut bc2 = SeriesEstimate::sup(&mus).unwrap_or_else(|| empty_estimate(cfg));
    let mut bc3 = SeriesEstimate::sup(&gammas).unwrap_or_else(|| empty_estimate(cfg));
    if failed > 0 {
        for s in [&mut bc2, &mut bc3] {
            s.verdict = s.verdict.worst(Verdict::Inconclusive);
            s.tail_bound = None;
        }
    }
    let q_below_one = bc3.upper().is_some_and(|q| q < 1.0);
    let range = touched_range(cfg);
    let weights_sup = (range.0..=range.1)
        .map(|n| operator_norm(&sys.p.at(n), sys.norm_kind()))
        .fold(0.0, f64::max);
    BasicReport {
        n_range: cfg.n_range,
        half_width: k,
        bc1_sampled_ok: sampled.bc1_ok(),
        sampled,
        bc2,
        bc3,
        q_below_one,
        bc4: check_bc4(sys, range),
        weights_sup,
    }
}

fn empty_estimate(cfg: &HypothesisConfig) -> SeriesEstimate {
    SeriesEstimate {
        partial_sum: 0.0,
        tail_bound: None,
        verdict: Verdict::Inconclusive,
        window: cfg.n_range,
        terms_inspected: 0,
        tail_method: crate::series::TailMethod::None,
        witness: Some("no kernel row could be evaluated".into()),
        envelope_violation: false,
    }
}

/// BC1–BC4 over the configured window.
pub fn check_basic(sys: &SystemSpec, cfg: &HypothesisConfig) -> BasicReport {
    let rows = build_rows(sys, cfg);
    basic_from_rows(sys, cfg, &rows, sample_constants(sys, cfg))
}

pub(crate) fn advanced_first_from_row(
    sys: &SystemSpec,
    row: &KernelRow,
    half_width: u32,
    cfg: &SeriesConfig,
) -> Result<AdvancedFirst> {
    let k = row.k_series(sys, half_width, cfg)?;
    let j = row.j_series(sys, half_width, cfg)?;
    let center = row.center();
    let total_upper = match (k.upper(), j.upper()) {
        (Some(a), Some(b)) => Some(a + b + center),
        _ => None,
    };
    Ok(AdvancedFirst {
        n: row.n(),
        ac3: total_upper.is_some_and(|t| t < 1.0),
        k,
        j,
        center,
        total_upper,
    })
}

/// `K_n`, `J_n` and AC3 at `n`.
pub fn check_advanced_first(
    sys: &SystemSpec,
    n: i64,
    half_width: u32,
    cfg: &SeriesConfig,
) -> Result<AdvancedFirst> {
    let row = KernelRow::build(sys, n, half_width)?;
    advanced_first_from_row(sys, &row, half_width, cfg)
}

/// The AC9 series at `n`.
pub fn check_advanced_second(
    sys: &SystemSpec,
    n: i64,
    half_width: u32,
    cfg: &SeriesConfig,
) -> Result<SeriesEstimate> {
    let row = KernelRow::build(sys, n, half_width)?;
    row.second_series(sys, half_width, cfg)
}

/// Every condition over the configured window, rows in parallel.
pub fn check_all(sys: &SystemSpec, cfg: &HypothesisConfig) -> HypothesisReport {
    let rows = build_rows(sys, cfg);
    let sampled = sample_constants(sys, cfg);
    let ac4_sampled_ok = sampled.ac4_ok();
    let ac5_sampled_ok = sampled.ac5_ok();
    let basic = basic_from_rows(sys, cfg, &rows, sampled);
    let per_n: Vec<(i64, Result<(AdvancedFirst, SeriesEstimate)>)> = rows
        .par_iter()
        .map(|(n, row)| {
            let res = match row {
                Ok(row) => advanced_first_from_row(sys, row, cfg.half_width, &cfg.series).and_then(|a| {
                    row.second_series(sys, cfg.half_width, &cfg.series).map(|s| (a, s))
                }),
                Err(e) => Err(e.clone()),
            };
            (*n, res)
        })
        .collect();
    let mut ac2 = BTreeMap::new();
    let mut ac3 = BTreeMap::new();
    let mut ac9 = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for (n, res) in per_n {
        match res {
            Ok((a, s)) => {
                ac3.insert(n, a.ac3);
                ac2.insert(n, a);
                ac9.insert(n, s);
            }
            Err(e) => {
                ac3.insert(n, false);
                errors.insert(n, e.to_string());
            }
        }
    }
    HypothesisReport {
        basic,
        ac2,
        ac3,
        ac4_sampled_ok,
        ac5_sampled_ok,
        ac6: check_ac6(sys, touched_range(cfg)),
        ac9,
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{build, ExampleParams, Variant};

    fn small_cfg() -> HypothesisConfig {
        HypothesisConfig {
            n_range: (-3, 3),
            half_width: 30,
            probes: 100,
            ..HypothesisConfig::default()
        }
    }

    #[test]
    fn zero_coupling_gives_zero_sums() {
        let mut p = ExampleParams::new(Variant::Ex1);
        p.gamma_scale = 0.0;
        let sys = build(&p).unwrap();
        let rep = check_all(&sys, &small_cfg());
        assert_eq!(rep.basic.bc2.partial_sum, 0.0);
        assert_eq!(rep.basic.bc2.upper(), Some(0.0));
        assert_eq!(rep.basic.bc3.upper(), Some(0.0));
        for a in rep.ac2.values() {
            assert_eq!(a.total_upper, Some(0.0));
            assert!(a.ac3);
        }
        assert!(rep.pass(false));
    }

    #[test]
    fn ex1_chain_holds() {
        let p = ExampleParams::new(Variant::Ex1);
        let sys = build(&p).unwrap();
        let rep = check_all(&sys, &small_cfg());
        assert!(rep.basic.ok(), "{:?}", rep.basic);
        let bound = p.chain_bound().unwrap();
        for a in rep.ac2.values() {
            assert!(a.ac3);
            assert!(a.k.partial_sum + a.j.partial_sum + a.center <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn emo_j_series_diverges() {
        let mut p = ExampleParams::new(Variant::Emo);
        p.c = 0.01;
        let sys = build(&p).unwrap();
        let a = check_advanced_first(&sys, 0, 50, &SeriesConfig::default()).unwrap();
        assert_eq!(a.j.verdict, Verdict::Divergent);
        assert!(!a.ac3);
    }

    #[test]
    fn expanding_driver_makes_second_series_diverge() {
        use crate::linalg::{Mat, NormKind, Vector};
        use crate::maps::SaturatingCoupling;
        use crate::system::{Driver, OperatorSeq, SpaceSpec, WeightSeq};
        use std::sync::Arc;

        struct Doubling;
        impl Driver for Doubling {
            fn eval(&self, _n: i64, y: &Vector) -> Vector {
                y * 2.0
            }
            fn eval_inv(&self, _n: i64, y: &Vector) -> Vector {
                y * 0.5
            }
            fn jac(&self, _n: i64, _y: &Vector) -> Mat {
                Mat::identity(1, 1) * 2.0
            }
            fn tau(&self, _n: i64) -> f64 {
                2.0
            }
            fn sigma(&self, _n: i64) -> f64 {
                0.5
            }
        }
        let space = SpaceSpec::new(1, 1, NormKind::Max).unwrap();
        let sys = SystemSpec::new(
            space,
            OperatorSeq::constant(Mat::identity(1, 1)),
            WeightSeq::constant(Mat::zeros(1, 1)),
            Arc::new(SaturatingCoupling::new(1, 1, NormKind::Max, |_| 0.01, 1.0)),
            Arc::new(Doubling),
        )
        .unwrap();
        let s = check_advanced_second(&sys, 0, 30, &SeriesConfig::default()).unwrap();
        assert_eq!(s.verdict, Verdict::Divergent);
    }

    #[test]
    fn bc4_violation_is_reported_with_index() {
        let mut p = ExampleParams::new(Variant::Emo);
        p.c = 0.6;
        let sys = build(&p).unwrap();
        let b = check_bc4(&sys, (-2, 2));
        assert!(!b.ok);
        assert!(b.worst_value > 1.0);
        assert!(check_advanced_first(&sys, 0, 5, &SeriesConfig::default()).is_err());
    }

    #[test]
    fn sampled_constants_hold_for_builtins() {
        for v in [Variant::Ex1, Variant::Ex2, Variant::Remm, Variant::EndCfg] {
            let mut p = ExampleParams::new(v);
            p.with_driver = true;
            let sys = build(&p).unwrap();
            let s = sample_constants(&sys, &small_cfg());
            assert!(s.bc1_ok() && s.ac4_ok() && s.ac5_ok(), "{v}: {s:?}");
        }
    }
}
