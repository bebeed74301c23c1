// SPDX-License-Identifier: Apache-2.0

//! The conjugacies `H̄_n(ξ, η) = (ξ + h̄_n(ξ, η), η)` and
//! `H_n(ξ, η) = (ξ + h_n(ξ, η), η)`.
//!
//! `h̄_n` is the Green-kernel series
//!
//! ```text
//! h̄_n(ξ, η) = −Σ_k 𝒢(n, k+1) f_k(x_2(k, n, ξ, η), y(k, n, η))
//! ```
//!
//! truncated to `k ∈ [n−K, n+K]`, where `K` is the smallest half-width, not
//! below the configured one, whose μ-tail bound is below `series_tol`. `h_n` is the fixed point of `u = −h̄_n(ξ + u, η)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{coupled_trajectory_with, OperatorTable, SolveOptions, Trajectory};
use crate::hypotheses::{advanced_first_from_row, AdvancedFirst};
use crate::kernel::KernelRow;
use crate::linalg::{vector_norm, Vector};
use crate::series::{SeriesConfig, SeriesEstimate};
use crate::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Initial half-width `K` of the summation window.
    pub window_halfwidth: u32,
    /// Largest half-width the window may grow to.
    pub window_cap: u32,
    /// Target bound on the truncation error of `h̄_n`.
    pub series_tol: f64,
    /// Residual `|u + h̄_n(ξ+u, η)|` accepted for `h_n`.
    pub fp_tol: f64,
    pub max_iters: usize,
    /// Options for the backward steps inside trajectories.
    pub solve: SolveOptions,
    pub series: SeriesConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window_halfwidth: 40,
            window_cap: 640,
            series_tol: 1e-9,
            fp_tol: 1e-10,
            max_iters: 500,
            solve: SolveOptions {
                fixed_point_tol: 1e-14,
                max_iters: 200,
            },
            series: SeriesConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_halfwidth == 0 {
            return Err(Error::InvalidConfig("window_halfwidth must be positive".into()));
        }
        if self.window_cap < self.window_halfwidth {
            return Err(Error::InvalidConfig("window_cap is below window_halfwidth".into()));
        }
        for (name, v) in [("series_tol", self.series_tol), ("fp_tol", self.fp_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        self.solve.validate()
    }
}

/// Everything the engine needs at one `n`, computed once.
#[derive(Debug)]
pub(crate) struct RowInfo {
    pub n: i64,
    pub half_width: u32,
    pub row: KernelRow,
    pub mu: SeriesEstimate,
    pub first: Result<AdvancedFirst>,
    /// Full first-variable series, centre term included.
    pub first_full: Result<SeriesEstimate>,
    pub second: Result<SeriesEstimate>,
    /// Smallest and largest `k` with a nonzero term.
    pub active: Option<(i64, i64)>,
    /// Operators over `[min(lo, n), max(hi, n)]` of the active range.
    pub ops: Option<OperatorTable>,
}

impl RowInfo {
    /// Index range of the trajectory needed for the series.
    pub fn span(&self) -> Option<(i64, i64)> {
        self.active.map(|(lo, hi)| (lo.min(self.n), hi.max(self.n)))
    }
}

/// `h̄_n(ξ, η)` with its truncation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: Vector,
    /// Bound on `Σ_{|k−n|>K} |𝒢(n,k+1)| μ_k`.
    pub tail_bound: f64,
    pub half_width: u32,
}

/// Outcome of the fixed-point iteration for `h_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub value: Vector,
    pub iterations: usize,
    /// `|u + h̄_n(ξ+u, η)|` at the returned `u`.
    pub residual: f64,
    /// Residual of every iterate, starting with the initial guess.
    pub residuals: Vec<f64>,
    /// Certified bound on the Lipschitz constant of `h̄_n` in `ξ`.
    pub contraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equivariance {
    /// `max_j |F_j(H_j(x_j, y_j)) − H_{j+1}(x_{j+1}, y_{j+1})|` along a
    /// linear trajectory.
    pub forward: f64,
    /// `max_j |A_j(x_j + h̄_j) − (x_{j+1} + h̄_{j+1})|` along a coupled
    /// trajectory.
    pub dual: f64,
}

impl Equivariance {
    pub fn max(&self) -> f64 {
        self.forward.max(self.dual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseResiduals {
    /// `|H̄_n(H_n(ξ, η)) − (ξ, η)|`.
    pub bar_after_h: f64,
    /// `|H_n(H̄_n(ξ, η)) − (ξ, η)|`.
    pub h_after_bar: f64,
}

impl InverseResiduals {
    pub fn max(&self) -> f64 {
        self.bar_after_h.max(self.h_after_bar)
    }
}

/// Evaluator for `h̄_n`, `h_n` and the conjugacies. Per-`n` data is built
/// on first use and cached, so results do not depend on call order.
pub struct ConjugacyEngine {
    sys: SystemSpec,
    cfg: EngineConfig,
    rows: RwLock<HashMap<i64, Result<Arc<RowInfo>>>>,
}

impl std::fmt::Debug for ConjugacyEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConjugacyEngine")
            .field("sys", &self.sys)
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl ConjugacyEngine {
    pub fn new(sys: SystemSpec, cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            sys,
            cfg,
            rows: RwLock::new(HashMap::new()),
        })
    }

    pub fn sys(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub(crate) fn row(&self, n: i64) -> Result<Arc<RowInfo>> {
        if let Some(r) = self.rows.read().expect("row cache poisoned").get(&n) {
            return r.clone();
        }
        let built = self.build_row(n).map(Arc::new);
        self.rows
            .write()
            .expect("row cache poisoned")
            .entry(n)
            .or_insert(built)
            .clone()
    }

    fn build_row(&self, n: i64) -> Result<RowInfo> {
        let sys = &self.sys;
        let cfg = &self.cfg;
        let mut k = cfg.window_halfwidth.min(cfg.window_cap);
        let mut row = KernelRow::build(sys, n, k)?;
        let mu = loop {
            let mu = row.mu_series(sys, k, &cfg.series);
            let tail = match (mu.is_converged(), mu.tail_bound) {
                (true, Some(t)) => t,
                _ => f64::INFINITY,
            };
            if tail <= cfg.series_tol {
                break mu;
            }
            if k >= cfg.window_cap {
                return Err(Error::WindowExhausted {
                    n,
                    half_width: k,
                    tail,
                    target: cfg.series_tol,
                });
            }
            k += 1;
            row.grow(sys, k)?;
        };
        let mut active: Option<(i64, i64)> = None;
        for e in row.entries(k) {
            let f = &sys.f;
            let live = e.green_norm > 0.0 && (f.mu(e.k) != 0.0 || f.gamma(e.k) != 0.0 || f.rho(e.k) != 0.0);
            if live {
                active = Some(active.map_or((e.k, e.k), |(lo, _)| (lo, e.k)));
            }
        }
        let ops = match active {
            Some((lo, hi)) => Some(OperatorTable::build(sys, lo.min(n), hi.max(n))?),
            None => None,
        };
        Ok(RowInfo {
            n,
            half_width: k,
            first: advanced_first_from_row(sys, &row, k, &cfg.series),
            first_full: row.first_series(sys, k, &cfg.series),
            second: row.second_series(sys, k, &cfg.series),
            mu,
            active,
            ops,
            row,
        })
    }

    /// Half-width of the window used at `n`.
    pub fn window(&self, n: i64) -> Result<u32> {
        Ok(self.row(n)?.half_width)
    }

    /// The μ-series at `n` over the chosen window.
    pub fn mu_estimate(&self, n: i64) -> Result<SeriesEstimate> {
        Ok(self.row(n)?.mu.clone())
    }

    /// `K_n`, `J_n` and the AC3 decision at `n`.
    pub fn advanced_first(&self, n: i64) -> Result<AdvancedFirst> {
        self.row(n)?.first.clone()
    }

    /// Upper bound on `K_n + J_n + |𝒢(n,n+1)| γ_n`, or infinity when a
    /// series could not be certified.
    pub fn contraction_estimate(&self, n: i64) -> Result<f64> {
        let a = self.advanced_first(n)?;
        Ok(a.total_upper.unwrap_or(f64::INFINITY))
    }

    /// `contraction_estimate(n)`, failing unless it is below one.
    pub fn certified_contraction(&self, n: i64) -> Result<f64> {
        let c = self.contraction_estimate(n)?;
        if c < 1.0 {
            Ok(c)
        } else {
            Err(Error::ContractionViolation {
                condition: "K_n + J_n + |G(n,n+1)| gamma_n < 1",
                index: n,
                value: c,
            })
        }
    }

    fn check_dims(&self, xi: &Vector, eta: &Vector) -> Result<()> {
        for (expected, got) in [(self.sys.dim_x(), xi.len()), (self.sys.dim_y(), eta.len())] {
            if expected != got {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }

    /// The coupled trajectory through `(ξ, η)` over the active range at `n`.
    pub(crate) fn trajectory(&self, info: &RowInfo, xi: &Vector, eta: &Vector) -> Result<Option<Trajectory>> {
        let (Some((lo, hi)), Some(ops)) = (info.span(), info.ops.as_ref()) else {
            return Ok(None);
        };
        coupled_trajectory_with(&self.sys, ops, info.n, lo, hi, xi, eta, &self.cfg.solve).map(Some)
    }

    pub fn bar_h_detailed(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<SeriesValue> {
        self.check_dims(xi, eta)?;
        let info = self.row(n)?;
        let mut value = Vector::zeros(self.sys.dim_x());
        if let (Some(tr), Some((lo, hi))) = (self.trajectory(&info, xi, eta)?, info.active) {
            for k in lo..=hi {
                let e = info.row.entry(k).expect("row covers its active range");
                if e.green_norm == 0.0 {
                    continue;
                }
                value -= &e.green * self.sys.f.eval(k, tr.x(k), tr.y(k));
            }
        }
        Ok(SeriesValue {
            value,
            tail_bound: info.mu.tail_bound.unwrap_or(f64::INFINITY),
            half_width: info.half_width,
        })
    }

    pub fn bar_h(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<Vector> {
        self.bar_h_detailed(n, xi, eta).map(|s| s.value)
    }

    #[allow(non_snake_case)]
    pub fn bar_H(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<(Vector, Vector)> {
        let h = self.bar_h(n, xi, eta)?;
        Ok((xi + h, eta.clone()))
    }

    pub fn h_detailed(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<FixedPoint> {
        self.h_with(n, xi, eta, None, self.cfg.fp_tol)
    }

    /// The fixed-point iteration for `h_n` from `start` (zero by default)
    /// with residual target `fp_tol`.
    pub fn h_with(
        &self,
        n: i64,
        xi: &Vector,
        eta: &Vector,
        start: Option<&Vector>,
        fp_tol: f64,
    ) -> Result<FixedPoint> {
        self.check_dims(xi, eta)?;
        let kappa = self.certified_contraction(n)?;
        let kind = self.sys.norm_kind();
        let mut u = match start {
            Some(s) => {
                self.check_dims(s, eta)?;
                s.clone()
            }
            None => Vector::zeros(self.sys.dim_x()),
        };
        let mut residuals = Vec::new();
        // Non-decreasing residuals tolerated before giving up.
        let mut stalls = 0;
        for it in 0..self.cfg.max_iters {
            let next = -self.bar_h(n, &(xi + &u), eta)?;
            let r = vector_norm(&(&next - &u), kind);
            if !r.is_finite() {
                return Err(Error::Numerical(format!("non-finite residual in h at n = {n}")));
            }
            residuals.push(r);
            if r <= fp_tol {
                return Ok(FixedPoint {
                    value: u,
                    iterations: it,
                    residual: r,
                    residuals,
                    contraction: kappa,
                });
            }
            if residuals.len() >= 2 && r >= residuals[residuals.len() - 2] {
                stalls += 1;
                if stalls >= 3 {
                    return Err(Error::NoConvergence {
                        iterations: it + 1,
                        residual: r,
                    });
                }
            }
            u = next;
        }
        Err(Error::NoConvergence {
            iterations: self.cfg.max_iters,
            residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        })
    }

    pub fn h(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<Vector> {
        self.h_detailed(n, xi, eta).map(|f| f.value)
    }

    #[allow(non_snake_case)]
    pub fn H(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<(Vector, Vector)> {
        let h = self.h(n, xi, eta)?;
        Ok((xi + h, eta.clone()))
    }

    fn step(&self, j: i64, x: &Vector, y: &Vector) -> (Vector, Vector) {
        let nx = self.sys.a.at(j) * x + self.sys.f.eval(j, x, y);
        let ny = if self.sys.dim_y() == 0 {
            y.clone()
        } else {
            self.sys.g.eval(j, y)
        };
        (nx, ny)
    }

    /// Intertwining defects of `H` and `H̄` over `steps` steps from `n`.
    pub fn equivariance_residual(&self, n: i64, xi: &Vector, eta: &Vector, steps: usize) -> Result<Equivariance> {
        self.check_dims(xi, eta)?;
        let kind = self.sys.norm_kind();
        let d = self.sys.dim_y();
        let lift = |j: i64, y: &Vector| if d == 0 { y.clone() } else { self.sys.g.eval(j, y) };

        let mut forward: f64 = 0.0;
        let (mut x, mut y) = (xi.clone(), eta.clone());
        let mut hx = self.h(n, &x, &y)?;
        for s in 0..steps {
            let j = n + s as i64;
            let (lhs, _) = self.step(j, &(&x + &hx), &y);
            x = self.sys.a.at(j) * &x;
            y = lift(j, &y);
            hx = self.h(j + 1, &x, &y)?;
            forward = forward.max(vector_norm(&(lhs - (&x + &hx)), kind));
        }

        let mut dual: f64 = 0.0;
        let (mut x, mut y) = (xi.clone(), eta.clone());
        let mut bx = self.bar_h(n, &x, &y)?;
        for s in 0..steps {
            let j = n + s as i64;
            let lhs = self.sys.a.at(j) * (&x + &bx);
            (x, y) = self.step(j, &x, &y);
            bx = self.bar_h(j + 1, &x, &y)?;
            dual = dual.max(vector_norm(&(lhs - (&x + &bx)), kind));
        }
        Ok(Equivariance { forward, dual })
    }

    /// `|H̄∘H − id|` and `|H∘H̄ − id|` at `(ξ, η)`. The second components
    /// agree exactly, so only X contributes.
    pub fn inverse_residuals(&self, n: i64, xi: &Vector, eta: &Vector) -> Result<InverseResiduals> {
        let kind = self.sys.norm_kind();
        let (hx, hy) = self.H(n, xi, eta)?;
        let (bx, _) = self.bar_H(n, &hx, &hy)?;
        let (wx, wy) = self.bar_H(n, xi, eta)?;
        let (cx, _) = self.H(n, &wx, &wy)?;
        Ok(InverseResiduals {
            bar_after_h: vector_norm(&(bx - xi), kind),
            h_after_bar: vector_norm(&(cx - xi), kind),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{build, ExampleParams, Variant};
    use crate::linalg::{Mat, NormKind};
    use crate::maps::{IdentityDriver, SaturatingCoupling};
    use crate::system::{OperatorSeq, SpaceSpec, WeightSeq};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn engine(p: ExampleParams) -> ConjugacyEngine {
        ConjugacyEngine::new(build(&p).unwrap(), EngineConfig::default()).unwrap()
    }

    #[test]
    fn zero_coupling_gives_exact_zero() {
        let mut p = ExampleParams::new(Variant::Ex1);
        p.gamma_scale = 0.0;
        let e = engine(p);
        let xi = v(&[0.3, -0.7]);
        let eta = Vector::zeros(0);
        assert_eq!(e.bar_h(2, &xi, &eta).unwrap(), Vector::zeros(2));
        assert_eq!(e.h(2, &xi, &eta).unwrap(), Vector::zeros(2));
        let eq = e.equivariance_residual(0, &xi, &eta, 10).unwrap();
        assert!(eq.max() <= 1e-12);
    }

    #[test]
    fn single_term_series_by_hand() {
        // γ_k = 0 except at k = 0: h̄_0(ξ) = −𝒢(0,1) f_0(ξ).
        let space = SpaceSpec::new(2, 0, NormKind::Max).unwrap();
        let a = Mat::from_diagonal(&v(&[2.0, 0.5]));
        let p = Mat::from_diagonal(&v(&[0.0, 1.0]));
        let f = SaturatingCoupling::new(2, 0, NormKind::Max, |k| if k == 0 { 0.2 } else { 0.0 }, 0.0);
        let sys = SystemSpec::new(
            space,
            OperatorSeq::constant(a),
            WeightSeq::constant(p),
            Arc::new(f),
            Arc::new(IdentityDriver::new(0)),
        )
        .unwrap();
        let e = ConjugacyEngine::new(sys, EngineConfig::default()).unwrap();
        let xi = v(&[0.4, -1.1]);
        let got = e.bar_h(0, &xi, &Vector::zeros(0)).unwrap();
        // 𝒢(0,1) = −A_0^{-1}(I − P) = diag(−0.5, 0).
        let expected = v(&[0.5 * 0.2 * 0.4f64.tanh(), 0.0]);
        assert_eq!(got, expected);
    }

    #[test]
    fn second_component_is_untouched() {
        let e = engine(ExampleParams::new(Variant::EndCfg));
        let xi = v(&[0.1, 0.2]);
        let eta = v(&[-0.5, 0.25]);
        assert_eq!(e.H(0, &xi, &eta).unwrap().1, eta);
        assert_eq!(e.bar_H(0, &xi, &eta).unwrap().1, eta);
    }

    #[test]
    fn ex1_identities() {
        let e = engine(ExampleParams::new(Variant::Ex1));
        let xi = v(&[0.6, -0.9]);
        let eta = Vector::zeros(0);
        let inv = e.inverse_residuals(1, &xi, &eta).unwrap();
        assert!(inv.max() <= 1e-10 + 1e-8, "{inv:?}");
        let eq = e.equivariance_residual(-2, &xi, &eta, 10).unwrap();
        assert!(eq.forward <= 1e-7 && eq.dual <= 1e-8, "{eq:?}");
    }

    #[test]
    fn fixed_point_residuals_contract() {
        let e = engine(ExampleParams::new(Variant::Ex1));
        let fp = e.h_detailed(0, &v(&[1.0, 1.0]), &Vector::zeros(0)).unwrap();
        assert!(fp.contraction < 1.0);
        for w in fp.residuals.windows(2) {
            assert!(w[1] <= 1.1 * fp.contraction * w[0] + 1e-15, "{:?}", fp.residuals);
        }
        assert!(fp.residual <= e.config().fp_tol);
    }

    #[test]
    fn emo_refuses_h() {
        let mut p = ExampleParams::new(Variant::Emo);
        p.c = 0.01;
        let e = engine(p);
        let err = e.h(0, &v(&[0.1, 0.1]), &Vector::zeros(0));
        assert!(matches!(err, Err(Error::ContractionViolation { .. })), "{err:?}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = engine(ExampleParams::new(Variant::Ex1));
        let err = e.bar_h(0, &v(&[1.0]), &Vector::zeros(0));
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }
}
