// SPDX-License-Identifier: Apache-2.0

//! Frozen values from independent computations (bisection and direct
//! scalar sums in f64, outside this crate).

use std::sync::Arc;

use smoothlin::conjugacy::{ConjugacyEngine, EngineConfig};
use smoothlin::derivatives::h_jacobians;
use smoothlin::evolution::{backward_step, SolveOptions};
use smoothlin::examples::{build, symmetric_product, ExampleParams, Variant};
use smoothlin::hypotheses::check_advanced_first;
use smoothlin::maps::{IdentityDriver, SaturatingCoupling};
use smoothlin::series::SeriesConfig;
use smoothlin::system::{OperatorSeq, SpaceSpec, WeightSeq};
use smoothlin::{Mat, NormKind, SystemSpec, Vector};

fn scalar(a: f64, p: f64, gamma: impl Fn(i64) -> f64 + Send + Sync + 'static) -> SystemSpec {
    SystemSpec::new(
        SpaceSpec::new(1, 0, NormKind::Max).unwrap(),
        OperatorSeq::constant(Mat::from_element(1, 1, a)),
        WeightSeq::constant(Mat::from_element(1, 1, p)),
        Arc::new(SaturatingCoupling::new(1, 0, NormKind::Max, gamma, 0.0)),
        Arc::new(IdentityDriver::new(0)),
    )
    .unwrap()
}

fn s(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn none() -> Vector {
    Vector::zeros(0)
}

/// `2x + 0.3 tanh x = 1.7`, solved by bisection.
const T_ORACLE: f64 = 0.7543403212531201;

#[test]
fn backward_step_matches_bisection() {
    let sys = scalar(2.0, 0.0, |_| 0.3);
    let opts = SolveOptions {
        fixed_point_tol: 1e-15,
        max_iters: 200,
    };
    let t = backward_step(&sys, 0, &s(1.7), &none(), &opts).unwrap();
    assert!((t[0] - T_ORACLE).abs() < 1e-13, "{}", t[0]);
}

/// EX1, λ = ln 2, γ scale 0.9: (n, K_n, J_n, centre), from direct scalar sums
/// over 300 terms per side.
const EX1_CHAIN: [(i64, f64, f64, f64); 3] = [
    (0, 0.013310568032668963, 0.00331292939813653, 0.003298409712775694),
    (3, 0.037098328508407816, 0.00041252789718682515, 0.00041230121409696174),
    (-5, 0.00041241456899713256, 0.009728040398902342, 0.00010307530352424043),
];

#[test]
fn ex1_chain_matches_scalar_sums() {
    assert!((symmetric_product(0.5) - 11.369115199591992).abs() < 1e-12);
    let sys = build(&ExampleParams::new(Variant::Ex1)).unwrap();
    for (n, k, j, centre) in EX1_CHAIN {
        let a = check_advanced_first(&sys, n, 60, &SeriesConfig::default()).unwrap();
        assert!((a.k.partial_sum - k).abs() < 1e-12 * k.max(1e-3), "K_{n}: {} vs {k}", a.k.partial_sum);
        assert!((a.j.partial_sum - j).abs() < 1e-12 * j.max(1e-3), "J_{n}: {} vs {j}", a.j.partial_sum);
        assert!((a.center - centre).abs() < 1e-15, "centre_{n}");
        let total = a.total_upper.unwrap();
        assert!(total >= k + j + centre - 1e-15 && total < k + j + centre + 1e-9);
        assert!(a.ac3);
    }
}

/// One-term system: A = 2, P = 0, γ_0 = 0.4 and γ_k = 0 otherwise, so
/// h̄_0 = 0.2 tanh ξ and h̄_{-1} = 0.1 tanh 2ξ.
fn one_term() -> ConjugacyEngine {
    let sys = scalar(2.0, 0.0, |k| if k == 0 { 0.4 } else { 0.0 });
    let cfg = EngineConfig {
        fp_tol: 1e-15,
        ..EngineConfig::default()
    };
    ConjugacyEngine::new(sys, cfg).unwrap()
}

/// Roots of `u + 0.2 tanh(0.8 + u)` and `u + 0.1 tanh(2(0.8 + u))`.
const H0_ORACLE: f64 = -0.11849888252512508;
const HM1_ORACLE: f64 = -0.08900147952675425;

#[test]
fn one_term_bar_h() {
    let e = one_term();
    for xi in [-1.3, 0.0, 0.8, 2.5] {
        assert!((e.bar_h(0, &s(xi), &none()).unwrap()[0] - 0.2 * f64::tanh(xi)).abs() < 1e-15);
        assert!((e.bar_h(-1, &s(xi), &none()).unwrap()[0] - 0.1 * f64::tanh(2.0 * xi)).abs() < 1e-15);
        assert_eq!(e.bar_h(1, &s(xi), &none()).unwrap()[0], 0.0);
    }
    assert!((e.bar_h(-1, &s(0.8), &none()).unwrap()[0] - 0.09216685544064714).abs() < 1e-15);
}

#[test]
fn one_term_h_matches_bisection() {
    let e = one_term();
    let h0 = e.h(0, &s(0.8), &none()).unwrap()[0];
    let hm1 = e.h(-1, &s(0.8), &none()).unwrap()[0];
    assert!((h0 - H0_ORACLE).abs() < 1e-14, "{h0}");
    assert!((hm1 - HM1_ORACLE).abs() < 1e-14, "{hm1}");
    assert!((e.contraction_estimate(0).unwrap() - 0.2).abs() < 1e-15);
}

/// `R = −D/(1 + D)`, `D = 0.2 sech²(0.8 + h_0)`.
const R_ORACLE: f64 = -0.11487981454715515;

#[test]
fn one_term_resolvent() {
    let e = one_term();
    let j = h_jacobians(&e, 0, &s(0.8), &none()).unwrap();
    assert!((j.r[(0, 0)] - R_ORACLE).abs() < 1e-13, "{}", j.r[(0, 0)]);
    let d = j.d_barh_dxi.value[(0, 0)];
    let expect = 0.2 / f64::cosh(0.8 + H0_ORACLE).powi(2);
    assert!((d - expect).abs() < 1e-15);
    assert_eq!(j.r_tilde.ncols(), 0);
}
