// SPDX-License-Identifier: Apache-2.0

//! Built-in parametric systems with closed-form norms, admissible coupling
//! sizes and geometric term envelopes.
//!
//! | variant   | A_n                                  | P_n          | γ_k                          |
//! |-----------|--------------------------------------|--------------|------------------------------|
//! | `ex1`     | diag(e^λ I, e^{-λ} I)                | diag(0, I)   | min of two λ-envelopes       |
//! | `ex2`     | diag(θ_n/θ_{n+1} I, B_n)             | diag(I, 0)   | min of two 2^{-|k|} envelopes |
//! | `remm`    | I                                    | I            | (2M)^{-(2|k|+n_0)}           |
//! | `end_cfg` | I, plus a rotation driver on R^2     | I            | (3M)^{-(2|k|+1)}             |
//! | `emo`     | as `ex1`                             | as `ex1`     | constant c                   |
//!
//! All couplings are `γ_k s(x + βEy)` from [`crate::maps::SaturatingCoupling`],
//! so `μ_k = γ_k` and `ρ_k = β γ_k`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, NormKind, Vector};
use crate::maps::{rotation, IdentityDriver, RotationDriver, SaturatingCoupling};
use crate::series::{GeomEnvelope, SeriesKind, TailEnvelopes};
use crate::system::{Driver, OperatorSeq, SpaceSpec, SystemSpec, WeightSeq};

/// Cap on the EX2 weights θ_n.
pub const THETA_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Remm,
    Ex1,
    Ex2,
    #[serde(alias = "end")]
    EndCfg,
    Emo,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Remm,
        Variant::Ex1,
        Variant::Ex2,
        Variant::EndCfg,
        Variant::Emo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Remm => "remm",
            Variant::Ex1 => "ex1",
            Variant::Ex2 => "ex2",
            Variant::EndCfg => "end_cfg",
            Variant::Emo => "emo",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "remm" => Ok(Variant::Remm),
            "ex1" => Ok(Variant::Ex1),
            "ex2" => Ok(Variant::Ex2),
            "end" | "end_cfg" | "end-cfg" => Ok(Variant::EndCfg),
            "emo" => Ok(Variant::Emo),
            other => Err(Error::InvalidConfig(format!(
                "unknown system `{other}` (expected remm, ex1, ex2, end_cfg or emo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExampleParams {
    pub variant: Variant,
    /// Rate λ for `ex1` and `emo`.
    pub lambda: f64,
    /// Dimension of the factor space; X has dimension `2 * dim_half`.
    pub dim_half: usize,
    /// Fraction of the maximal admissible coupling, in [0, 1].
    pub gamma_scale: f64,
    /// `ex2`: bound T on θ_{n+1}/θ_n.
    pub theta_ratio: f64,
    /// `ex2`: angle of the isometries B_n.
    pub rotation_angle: f64,
    /// `emo`: the constant coupling size.
    pub c: f64,
    /// Attach a planar driver on Y = R^2 (always on for `end_cfg`).
    pub with_driver: bool,
    pub driver_angle: f64,
    /// Shear of the driver; ignored for `end_cfg`, whose driver is a rotation.
    pub driver_shear: f64,
    /// β in `f = γ s(x + βEy)`.
    pub y_gain: f64,
    /// `remm`: the shift n_0 in `(2M)^{-(2|k|+n_0)}`.
    pub remm_shift: u32,
}

impl Default for ExampleParams {
    fn default() -> Self {
        Self::new(Variant::Ex1)
    }
}

impl ExampleParams {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            lambda: std::f64::consts::LN_2,
            dim_half: if variant == Variant::Ex2 { 2 } else { 1 },
            gamma_scale: 0.9,
            theta_ratio: 2.0,
            rotation_angle: 0.5,
            c: 0.01,
            with_driver: variant == Variant::EndCfg,
            driver_angle: 0.3,
            driver_shear: 0.1,
            y_gain: 1.0,
            remm_shift: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim_half == 0 {
            return bad("dim_half must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma_scale) {
            return bad(format!("gamma_scale must lie in [0, 1], got {}", self.gamma_scale));
        }
        if matches!(self.variant, Variant::Ex1 | Variant::Emo) && !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.variant == Variant::Ex2 && !(self.theta_ratio >= 1.0) {
            return bad(format!("theta_ratio must be at least 1, got {}", self.theta_ratio));
        }
        if self.variant == Variant::Emo && !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be nonnegative, got {}", self.c));
        }
        if !(self.y_gain >= 0.0 && self.y_gain.is_finite()) {
            return bad(format!("y_gain must be nonnegative, got {}", self.y_gain));
        }
        if !self.rotation_angle.is_finite() || !self.driver_angle.is_finite() || !self.driver_shear.is_finite() {
            return bad("angles and shear must be finite".into());
        }
        if self.variant == Variant::EndCfg && self.y_gain * self.gamma_scale / 3.0 > 1.0 {
            return bad(format!(
                "end_cfg needs y_gain * gamma_scale <= 3 so that rho_k <= 2^-|k|, got {}",
                self.y_gain * self.gamma_scale
            ));
        }
        Ok(())
    }

    pub fn dim_x(&self) -> usize {
        2 * self.dim_half
    }

    pub fn has_driver(&self) -> bool {
        self.with_driver || self.variant == Variant::EndCfg
    }

    pub fn dim_y(&self) -> usize {
        if self.has_driver() {
            2
        } else {
            0
        }
    }

    pub fn norm(&self) -> NormKind {
        match self.variant {
            Variant::Ex2 | Variant::EndCfg => NormKind::Euclidean,
            _ => NormKind::Max,
        }
    }

    /// The constant M of the variant's inequality chain.
    pub fn m_constant(&self) -> f64 {
        match self.variant {
            Variant::Ex1 | Variant::Emo => symmetric_product((-self.lambda).exp()),
            Variant::Ex2 => symmetric_product(0.5),
            Variant::Remm | Variant::EndCfg => 1.0,
        }
    }

    /// The coupling size γ_k.
    pub fn gamma(&self, k: i64) -> f64 {
        gamma_fn(self)(k)
    }

    /// `Σ_{k ∈ Z} γ_k`, summed until the terms underflow.
    pub fn gamma_sum(&self) -> f64 {
        if self.variant == Variant::Emo {
            return if self.c == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let g = gamma_fn(self);
        let mut total = g(0);
        for k in 1..100_000_i64 {
            let pair = g(k) + g(-k);
            total += pair;
            if pair <= total * 1e-18 {
                break;
            }
        }
        total
    }

    /// The bound on `K_n + J_n + |𝒢(n,n+1)| γ_n` from the variant's own
    /// estimate chain: `e^λ M Σγ` for `ex1`, `T M Σγ` for `ex2`.
    pub fn chain_bound(&self) -> Option<f64> {
        match self.variant {
            Variant::Ex1 => Some(self.lambda.exp() * self.m_constant() * self.gamma_sum()),
            Variant::Ex2 => Some(self.theta_ratio * self.m_constant() * self.gamma_sum()),
            _ => None,
        }
    }

    /// Closed form of `|𝒢(m, n)|` where one is known.
    pub fn closed_green_norm(&self, m: i64, n: i64) -> Option<f64> {
        match self.variant {
            Variant::Ex1 | Variant::Emo => Some((-self.lambda * (m - n).abs() as f64).exp()),
            Variant::Ex2 => Some(if m >= n {
                theta(self.theta_ratio, n) / theta(self.theta_ratio, m)
            } else {
                1.0
            }),
            Variant::Remm | Variant::EndCfg => Some(if m >= n { 1.0 } else { 0.0 }),
        }
    }
}

/// `Π_{j ∈ Z} (1 + r^{|j|})`.
pub fn symmetric_product(r: f64) -> f64 {
    let mut half = 1.0;
    let mut p = r;
    while p > 1e-18 {
        half *= 1.0 + p;
        p *= r;
    }
    2.0 * half * half
}

/// EX2 weights: 1 for n ≤ 0, `min(T^n, THETA_CAP)` for n > 0.
pub fn theta(t: f64, n: i64) -> f64 {
    if n <= 0 {
        1.0
    } else {
        t.powf(n as f64).min(THETA_CAP)
    }
}

fn gamma_fn(p: &ExampleParams) -> Arc<dyn Fn(i64) -> f64 + Send + Sync> {
    let s = p.gamma_scale;
    match p.variant {
        Variant::Ex1 => {
            let lambda = p.lambda;
            let r = (-lambda).exp();
            let budget = 0.5 * (1.0 - r) / ((1.0 + r) * lambda.exp() * p.m_constant());
            Arc::new(move |k: i64| {
                let a = k.unsigned_abs() as f64;
                let pointwise = 1.0 / ((lambda * (a + 1.0)).exp() + lambda.exp());
                s * pointwise.min(budget * r.powf(a))
            })
        }
        Variant::Ex2 => {
            let t = p.theta_ratio;
            let m = p.m_constant();
            Arc::new(move |k: i64| {
                let a = k.unsigned_abs() as f64;
                let pointwise = 1.0 / (t * (2f64.powf(a + 1.0) + 1.0));
                let budget = 2f64.powf(-a) / (6.0 * t * m);
                s * pointwise.min(budget)
            })
        }
        Variant::Remm => {
            let shift = p.remm_shift as f64;
            Arc::new(move |k: i64| s * 2f64.powf(-(2.0 * k.unsigned_abs() as f64 + shift)))
        }
        Variant::EndCfg => Arc::new(move |k: i64| s * 3f64.powf(-(2.0 * k.unsigned_abs() as f64 + 1.0))),
        Variant::Emo => {
            let c = p.c;
            Arc::new(move |_| c)
        }
    }
}

/// Geometric envelope `γ_k ≤ g0 q^{|k|}` of each variant's coupling size.
fn gamma_envelope(p: &ExampleParams) -> (f64, f64) {
    let s = p.gamma_scale;
    match p.variant {
        Variant::Ex1 => {
            let r = (-p.lambda).exp();
            let budget = 0.5 * (1.0 - r) / ((1.0 + r) * p.lambda.exp() * p.m_constant());
            (s * budget, r)
        }
        Variant::Ex2 => (s / (6.0 * p.theta_ratio * p.m_constant()), 0.5),
        Variant::Remm => (s * 2f64.powi(-(p.remm_shift as i32)), 0.25),
        Variant::EndCfg => (s / 3.0, 1.0 / 9.0),
        Variant::Emo => (p.c, 1.0),
    }
}

#[derive(Debug, Clone)]
struct ExampleEnvelopes {
    params: ExampleParams,
}

impl TailEnvelopes for ExampleEnvelopes {
    fn envelope(&self, kind: SeriesKind, center: i64) -> Option<GeomEnvelope> {
        let p = &self.params;
        let (g0, q) = gamma_envelope(p);
        let dist = center.unsigned_abs() as i32;
        // Every built-in except emo has |𝒢| ≤ 1 and γ_k ≤ g0 q^{|k|}.
        match (p.variant, kind) {
            (Variant::Emo, SeriesKind::Mu | SeriesKind::Gamma) => {
                let r = (-p.lambda).exp();
                Some(GeomEnvelope::new(p.c * p.lambda.exp() * r.powi(-dist), r))
            }
            (Variant::Emo, _) => None,
            (_, SeriesKind::Mu | SeriesKind::Gamma) => Some(GeomEnvelope::new(g0, q)),
            (Variant::Ex1 | Variant::Ex2, SeriesKind::SecondVar) if p.has_driver() => None,
            (Variant::Ex1, _) => Some(GeomEnvelope::new(
                p.lambda.exp() * p.m_constant() * g0,
                q,
            )),
            (Variant::Ex2, _) => Some(GeomEnvelope::new(
                p.theta_ratio * p.m_constant() * g0,
                q,
            )),
            (Variant::Remm | Variant::EndCfg, SeriesKind::FirstVar) => {
                let c = 1.0 / (1.0 - g0);
                Some(GeomEnvelope::new(g0 * c.powi(dist), c * q))
            }
            (Variant::Remm | Variant::EndCfg, SeriesKind::SecondVar) => {
                let sigma = if p.has_driver() {
                    driver_lipschitz(p)
                } else {
                    0.0
                };
                let c = 1.0 / (1.0 - g0) + sigma;
                let ratio = c * q;
                (ratio < 1.0).then(|| GeomEnvelope::new(g0 * (1.0 + p.y_gain) * c.powi(dist), ratio))
            }
        }
    }
}

fn make_driver(p: &ExampleParams) -> Arc<dyn Driver> {
    if !p.has_driver() {
        return Arc::new(IdentityDriver::new(0));
    }
    let shear = if p.variant == Variant::EndCfg {
        0.0
    } else {
        p.driver_shear
    };
    Arc::new(RotationDriver::new(p.driver_angle, p.norm()).with_shear(shear))
}

fn driver_lipschitz(p: &ExampleParams) -> f64 {
    let d = make_driver(p);
    d.tau(0).max(d.sigma(0))
}

/// Block rotation of R^d acting on consecutive coordinate pairs; a trailing
/// odd coordinate is left fixed.
pub fn block_rotation(dim: usize, angle: f64) -> Mat {
    let mut b = Mat::identity(dim, dim);
    let r = rotation(angle);
    let mut i = 0;
    while i + 1 < dim {
        b.view_mut((i, i), (2, 2)).copy_from(&r);
        i += 2;
    }
    b
}

fn block_diag(top: &Mat, bottom: &Mat) -> Mat {
    let (a, b) = (top.nrows(), bottom.nrows());
    let mut m = Mat::zeros(a + b, a + b);
    m.view_mut((0, 0), (a, a)).copy_from(top);
    m.view_mut((a, a), (b, b)).copy_from(bottom);
    m
}

fn scaled_identity(d: usize, s: f64) -> Mat {
    Mat::identity(d, d) * s
}

fn assemble(p: &ExampleParams, a: OperatorSeq, weights: WeightSeq) -> Result<SystemSpec> {
    let space = SpaceSpec::new(p.dim_x(), p.dim_y(), p.norm())?;
    let f = SaturatingCoupling::new(p.dim_x(), p.dim_y(), p.norm(), {
        let g = gamma_fn(p);
        move |k| g(k)
    }, p.y_gain);
    Ok(SystemSpec::new(space, a, weights, Arc::new(f), make_driver(p))?
        .with_envelopes(Arc::new(ExampleEnvelopes { params: *p }))
        .with_label(p.variant.name()))
}

fn hyperbolic_operators(p: &ExampleParams) -> (OperatorSeq, WeightSeq) {
    let d = p.dim_half;
    let (up, down) = (p.lambda.exp(), (-p.lambda).exp());
    let a_mat = block_diag(&scaled_identity(d, up), &scaled_identity(d, down));
    let inv_mat = block_diag(&scaled_identity(d, down), &scaled_identity(d, up));
    let a = OperatorSeq::constant(a_mat)
        .with_inverse(move |_| inv_mat.clone())
        .with_norms(move |_| up, move |_| up);
    let weights = WeightSeq::constant(block_diag(&Mat::zeros(d, d), &Mat::identity(d, d)));
    (a, weights)
}

pub fn make_ex1(p: &ExampleParams) -> Result<SystemSpec> {
    p.validate()?;
    let (a, w) = hyperbolic_operators(p);
    assemble(p, a, w)
}

pub fn make_emo(p: &ExampleParams) -> Result<SystemSpec> {
    p.validate()?;
    let (a, w) = hyperbolic_operators(p);
    assemble(p, a, w)
}

pub fn make_ex2(p: &ExampleParams) -> Result<SystemSpec> {
    p.validate()?;
    let d = p.dim_half;
    let t = p.theta_ratio;
    let b = block_rotation(d, p.rotation_angle);
    let bt = b.transpose();
    let a = OperatorSeq::from_fn(2 * d, move |n| {
        block_diag(&scaled_identity(d, theta(t, n) / theta(t, n + 1)), &b)
    })
    .with_inverse(move |n| block_diag(&scaled_identity(d, theta(t, n + 1) / theta(t, n)), &bt))
    .with_norms(
        move |n| (theta(t, n) / theta(t, n + 1)).max(1.0),
        move |n| (theta(t, n + 1) / theta(t, n)).max(1.0),
    );
    let weights = WeightSeq::constant(block_diag(&Mat::identity(d, d), &Mat::zeros(d, d)));
    assemble(p, a, weights)
}

fn identity_operators(p: &ExampleParams) -> (OperatorSeq, WeightSeq) {
    let dim = p.dim_x();
    let a = OperatorSeq::constant(Mat::identity(dim, dim))
        .with_inverse(move |_| Mat::identity(dim, dim))
        .with_norms(|_| 1.0, |_| 1.0);
    (a, WeightSeq::constant(Mat::identity(dim, dim)))
}

pub fn make_remm(p: &ExampleParams) -> Result<SystemSpec> {
    p.validate()?;
    let (a, w) = identity_operators(p);
    assemble(p, a, w)
}

pub fn make_end(p: &ExampleParams) -> Result<SystemSpec> {
    p.validate()?;
    let (a, w) = identity_operators(p);
    assemble(p, a, w)
}

/// Builds the system named by `p.variant`.
pub fn build(p: &ExampleParams) -> Result<SystemSpec> {
    match p.variant {
        Variant::Remm => make_remm(p),
        Variant::Ex1 => make_ex1(p),
        Variant::Ex2 => make_ex2(p),
        Variant::EndCfg => make_end(p),
        Variant::Emo => make_emo(p),
    }
}

/// Dimension of the probe space `X × Y`.
pub fn probe_dim(sys: &SystemSpec) -> usize {
    sys.dim_x() + sys.dim_y()
}

/// Splits a point of `X × Y` into its components.
pub fn split_point(sys: &SystemSpec, z: &Vector) -> (Vector, Vector) {
    let dx = sys.dim_x();
    (
        z.rows(0, dx).into_owned(),
        z.rows(dx, sys.dim_y()).into_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_product_matches_direct_sum_of_logs() {
        let r: f64 = 0.5;
        let direct: f64 = (-200..=200_i64)
            .map(|j| (1.0 + r.powi(j.unsigned_abs() as i32)).ln())
            .sum::<f64>()
            .exp();
        assert!((symmetric_product(r) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn ex1_green_norms_follow_closed_form() {
        let p = ExampleParams::new(Variant::Ex1);
        let sys = make_ex1(&p).unwrap();
        for (m, n) in [(4, 1), (-3, 5), (0, 0), (7, -7)] {
            let g = sys.green_norm(m, n).unwrap();
            assert!((g - p.closed_green_norm(m, n).unwrap()).abs() < 1e-12);
        }
        assert!((sys.green_norm(4, 1).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn ex1_gamma_respects_pointwise_and_total_budget() {
        let p = ExampleParams::new(Variant::Ex1);
        let l = p.lambda;
        for k in -30..=30_i64 {
            let bound = 1.0 / ((l * (k.abs() as f64 + 1.0)).exp() + l.exp());
            assert!(p.gamma(k) <= bound);
        }
        assert!(p.gamma_sum() < 1.0 / (l.exp() * p.m_constant()));
        assert!(p.chain_bound().unwrap() < 1.0);
    }

    #[test]
    fn ex2_theta_ratio_bounded() {
        for t in [1.0, 2.0, 3.5] {
            for n in -5..60 {
                let r = theta(t, n + 1) / theta(t, n);
                assert!(r >= 1.0 && r <= t + 1e-12);
            }
        }
    }

    #[test]
    fn ex2_lower_block_is_rotation_when_m_below_n() {
        let p = ExampleParams::new(Variant::Ex2);
        let sys = make_ex2(&p).unwrap();
        let g = sys.green(-2, 1).unwrap();
        let expected = -(block_rotation(2, p.rotation_angle).transpose().pow(3));
        let lower = g.view((2, 2), (2, 2)).into_owned();
        assert!((lower - expected).abs().max() < 1e-12);
        assert!(g.view((0, 0), (2, 4)).abs().max() == 0.0);
    }

    #[test]
    fn end_cfg_constraints_hold() {
        let p = ExampleParams::new(Variant::EndCfg);
        let sys = make_end(&p).unwrap();
        for k in -20..=20_i64 {
            let rho = sys.f.rho(k);
            assert!(rho <= sys.g.tau(k) + 1e-15);
            assert!(rho <= 2f64.powi(-(k.abs() as i32)));
            assert!(sys.g.sigma(k) * rho <= 1.0);
            assert!(sys.f.gamma(k) <= 3f64.powi(-(2 * k.abs() as i32 + 1)));
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = ExampleParams::new(Variant::Ex1);
        p.gamma_scale = 1.5;
        assert!(build(&p).is_err());
        let mut p = ExampleParams::new(Variant::Ex2);
        p.theta_ratio = 0.5;
        assert!(build(&p).is_err());
    }
}
