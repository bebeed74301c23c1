// SPDX-License-Identifier: Apache-2.0

//! Coupled systems `x_{n+1} = A_n x_n + f_n(x_n, y_n)`, `y_{n+1} = g_n(y_n)`,
//! their transition operators `𝒜(m, n)` and Green kernels `𝒢(m, n)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{invert, operator_norm, Mat, NormKind, Vector};
use crate::series::TailEnvelopes;

/// Reconstruction tolerance for `A_n A_n^{-1} = Id`.
pub const INVERSE_TOL: f64 = 1e-12;

type MatFn = Arc<dyn Fn(i64) -> Mat + Send + Sync>;
type ScalarFn = Arc<dyn Fn(i64) -> f64 + Send + Sync>;

/// Dimensions of X = R^dim_x and Y = R^dim_y and the norm on both.
///
/// `dim_y = 0` is the trivial-Y case, where the driver disappears and the
/// coupled system reduces to `x_{n+1} = A_n x_n + f_n(x_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub dim_x: usize,
    pub dim_y: usize,
    pub norm: NormKind,
}

impl SpaceSpec {
    pub fn new(dim_x: usize, dim_y: usize, norm: NormKind) -> Result<Self> {
        if dim_x == 0 {
            return Err(Error::InvalidConfig("dim_x must be at least 1".into()));
        }
        Ok(Self { dim_x, dim_y, norm })
    }
}

/// A sequence `(A_n)_{n ∈ Z}` of invertible operators on X.
///
/// Evaluation is closure-backed. When no analytic inverse is supplied the
/// inverse is computed by LU, checked against [`INVERSE_TOL`] and memoized.
#[derive(Clone)]
pub struct OperatorSeq {
    dim: usize,
    eval: MatFn,
    eval_inv: Option<MatFn>,
    norm: Option<ScalarFn>,
    inv_norm: Option<ScalarFn>,
    memo: Arc<RwLock<HashMap<i64, Arc<Mat>>>>,
}

impl fmt::Debug for OperatorSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSeq")
            .field("dim", &self.dim)
            .field("analytic_inverse", &self.eval_inv.is_some())
            .field("closed_form_norms", &self.norm.is_some())
            .finish()
    }
}

impl OperatorSeq {
    pub fn from_fn(dim: usize, eval: impl Fn(i64) -> Mat + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            eval_inv: None,
            norm: None,
            inv_norm: None,
            memo: Arc::new(RwLock::new(HashMap::new())),
        }
    }

    /// Same operator at every index.
    pub fn constant(m: Mat) -> Self {
        let dim = m.nrows();
        Self::from_fn(dim, move |_| m.clone())
    }

    pub fn with_inverse(mut self, inv: impl Fn(i64) -> Mat + Send + Sync + 'static) -> Self {
        self.eval_inv = Some(Arc::new(inv));
        self
    }

    /// Closed-form values of `|A_n|` and `|A_n^{-1}|` in the system norm.
    pub fn with_norms(
        mut self,
        norm: impl Fn(i64) -> f64 + Send + Sync + 'static,
        inv_norm: impl Fn(i64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.norm = Some(Arc::new(norm));
        self.inv_norm = Some(Arc::new(inv_norm));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, n: i64) -> Mat {
        (self.eval)(n)
    }

    pub fn inverse_at(&self, n: i64) -> Result<Mat> {
        if let Some(inv) = &self.eval_inv {
            return Ok(inv(n));
        }
        if let Some(hit) = self.memo.read().expect("operator memo poisoned").get(&n) {
            return Ok(hit.as_ref().clone());
        }
        let a = self.at(n);
        let inv = invert(&a).ok_or(Error::SingularOperator {
            index: n,
            residual: f64::INFINITY,
        })?;
        let residual = inverse_residual(&a, &inv);
        if !(residual <= INVERSE_TOL) {
            return Err(Error::SingularOperator { index: n, residual });
        }
        self.memo
            .write()
            .expect("operator memo poisoned")
            .insert(n, Arc::new(inv.clone()));
        Ok(inv)
    }

    pub fn norm_at(&self, n: i64, kind: NormKind) -> f64 {
        match &self.norm {
            Some(f) => f(n),
            None => operator_norm(&self.at(n), kind),
        }
    }

    pub fn inv_norm_at(&self, n: i64, kind: NormKind) -> Result<f64> {
        match &self.inv_norm {
            Some(f) => Ok(f(n)),
            None => Ok(operator_norm(&self.inverse_at(n)?, kind)),
        }
    }
}

/// `|A A^{-1} - Id|` in the max norm.
pub fn inverse_residual(a: &Mat, inv: &Mat) -> f64 {
    let dim = a.nrows();
    operator_norm(&(a * inv - Mat::identity(dim, dim)), NormKind::Max)
}

/// The weights `(P_n)`. They need not be projections.
#[derive(Clone)]
pub struct WeightSeq {
    eval: MatFn,
}

impl fmt::Debug for WeightSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("WeightSeq")
    }
}

impl WeightSeq {
    pub fn from_fn(eval: impl Fn(i64) -> Mat + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
        }
    }

    pub fn constant(m: Mat) -> Self {
        Self::from_fn(move |_| m.clone())
    }

    pub fn at(&self, n: i64) -> Mat {
        (self.eval)(n)
    }
}

/// The nonlinear coupling `f_n : X × Y → X` together with its constants.
///
/// Implementations promise `|f_n| ≤ μ_n`, `Lip_x f_n ≤ γ_n` and
/// `Lip_y f_n ≤ ρ_n`; the hypothesis checker samples these claims.
pub trait Coupling: Send + Sync {
    fn eval(&self, n: i64, x: &Vector, y: &Vector) -> Vector;
    /// `∂f_n/∂x`, dim_x × dim_x.
    fn jac_x(&self, n: i64, x: &Vector, y: &Vector) -> Mat;
    /// `∂f_n/∂y`, dim_x × dim_y.
    fn jac_y(&self, n: i64, x: &Vector, y: &Vector) -> Mat;
    fn mu(&self, n: i64) -> f64;
    fn gamma(&self, n: i64) -> f64;
    fn rho(&self, n: i64) -> f64;
}

/// The driver `g_n : Y → Y`, a diffeomorphism with Lipschitz constants
/// `τ_n` (forward) and `σ_n` (inverse).
pub trait Driver: Send + Sync {
    fn eval(&self, n: i64, y: &Vector) -> Vector;
    fn eval_inv(&self, n: i64, y: &Vector) -> Vector;
    fn jac(&self, n: i64, y: &Vector) -> Mat;
    fn tau(&self, n: i64) -> f64;
    fn sigma(&self, n: i64) -> f64;
}

/// Full description of one coupled system.
#[derive(Clone)]
pub struct SystemSpec {
    pub space: SpaceSpec,
    pub a: OperatorSeq,
    pub p: WeightSeq,
    pub f: Arc<dyn Coupling>,
    pub g: Arc<dyn Driver>,
    /// Analytic geometric envelopes for the series terms, when known.
    pub envelopes: Option<Arc<dyn TailEnvelopes>>,
    pub label: String,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("label", &self.label)
            .field("space", &self.space)
            .field("a", &self.a)
            .field("envelopes", &self.envelopes.is_some())
            .finish()
    }
}

impl SystemSpec {
    pub fn new(
        space: SpaceSpec,
        a: OperatorSeq,
        p: WeightSeq,
        f: Arc<dyn Coupling>,
        g: Arc<dyn Driver>,
    ) -> Result<Self> {
        if a.dim() != space.dim_x {
            return Err(Error::DimensionMismatch {
                expected: space.dim_x,
                got: a.dim(),
            });
        }
        Ok(Self {
            space,
            a,
            p,
            f,
            g,
            envelopes: None,
            label: "custom".into(),
        })
    }

    pub fn with_envelopes(mut self, env: Arc<dyn TailEnvelopes>) -> Self {
        self.envelopes = Some(env);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim_x(&self) -> usize {
        self.space.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.space.dim_y
    }

    pub fn norm_kind(&self) -> NormKind {
        self.space.norm
    }

    pub fn op_norm(&self, n: i64) -> f64 {
        self.a.norm_at(n, self.space.norm)
    }

    pub fn op_inv_norm(&self, n: i64) -> Result<f64> {
        self.a.inv_norm_at(n, self.space.norm)
    }

    /// `|A_n^{-1}| γ_n`, which must stay below one for backward evolution.
    pub fn backward_contraction(&self, n: i64) -> Result<f64> {
        Ok(self.op_inv_norm(n)? * self.f.gamma(n))
    }

    /// Transition operator `𝒜(m, n)`: `A_{m-1}⋯A_n` for `m > n`, the identity
    /// for `m = n` and `A_m^{-1}⋯A_{n-1}^{-1}` for `m < n`.
    pub fn transition(&self, m: i64, n: i64) -> Result<Mat> {
        let d = self.dim_x();
        let mut acc = Mat::identity(d, d);
        if m > n {
            for j in n..m {
                acc = self.a.at(j) * acc;
            }
        } else if m < n {
            for j in m..n {
                acc *= self.a.inverse_at(j)?;
            }
        }
        Ok(acc)
    }

    /// Green kernel: `𝒜(m, n) P_n` for `m ≥ n`, `-𝒜(m, n)(Id - P_n)` for `m < n`.
    pub fn green(&self, m: i64, n: i64) -> Result<Mat> {
        let t = self.transition(m, n)?;
        Ok(self.green_from_transition(m, n, &t))
    }

    fn green_from_transition(&self, m: i64, n: i64, t: &Mat) -> Mat {
        let p = self.p.at(n);
        if m >= n {
            t * p
        } else {
            let d = self.dim_x();
            -(t * (Mat::identity(d, d) - p))
        }
    }

    pub fn green_norm(&self, m: i64, n: i64) -> Result<f64> {
        Ok(operator_norm(&self.green(m, n)?, self.space.norm))
    }

    /// Walker producing `𝒢(n, i)` for `i` moving away from `n` on either side,
    /// with one matrix product per step.
    pub fn green_walker(&self, n: i64) -> GreenWalker<'_> {
        let d = self.dim_x();
        GreenWalker {
            sys: self,
            n,
            left_next: n,
            left_t: Mat::identity(d, d),
            right_next: n + 1,
            right_t: None,
        }
    }
}

/// Incremental evaluation of `𝒢(n, i)` for fixed `n`.
///
/// The left side yields `i = n, n-1, n-2, …` and the right side
/// `i = n+1, n+2, …`.
pub struct GreenWalker<'a> {
    sys: &'a SystemSpec,
    n: i64,
    left_next: i64,
    left_t: Mat,
    right_next: i64,
    right_t: Option<Mat>,
}

impl GreenWalker<'_> {
    pub fn next_left(&mut self) -> Result<(i64, Mat)> {
        let i = self.left_next;
        if i < self.n {
            // 𝒜(n, i) = 𝒜(n, i+1) A_i
            self.left_t = &self.left_t * self.sys.a.at(i);
        }
        let g = self.sys.green_from_transition(self.n, i, &self.left_t);
        self.left_next -= 1;
        Ok((i, g))
    }

    pub fn next_right(&mut self) -> Result<(i64, Mat)> {
        let i = self.right_next;
        // 𝒜(n, i) = 𝒜(n, i-1) A_{i-1}^{-1}
        let inv = self.sys.a.inverse_at(i - 1)?;
        let t = match self.right_t.take() {
            Some(prev) => prev * inv,
            None => inv,
        };
        let g = self.sys.green_from_transition(self.n, i, &t);
        self.right_t = Some(t);
        self.right_next += 1;
        Ok((i, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{IdentityDriver, ZeroCoupling};

    fn diag_system(lambda: f64) -> SystemSpec {
        let space = SpaceSpec::new(2, 0, NormKind::Max).unwrap();
        let a = OperatorSeq::constant(Mat::from_diagonal(&Vector::from_vec(vec![
            lambda.exp(),
            (-lambda).exp(),
        ])));
        let p = WeightSeq::constant(Mat::from_diagonal(&Vector::from_vec(vec![0.0, 1.0])));
        SystemSpec::new(
            space,
            a,
            p,
            Arc::new(ZeroCoupling::new(2, 0)),
            Arc::new(IdentityDriver::new(0)),
        )
        .unwrap()
    }

    #[test]
    fn transition_identity_at_equal_indices() {
        let sys = diag_system(0.5);
        assert_eq!(sys.transition(0, 0).unwrap(), Mat::identity(2, 2));
    }

    #[test]
    fn transition_inverse_branch_uses_lu() {
        let sys = diag_system(2.0_f64.ln());
        let t = sys.transition(-2, 1).unwrap();
        assert!((t[(0, 0)] - 0.125).abs() < 1e-14);
        assert!((t[(1, 1)] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn green_diagonal_is_weight() {
        let sys = diag_system(0.7);
        assert_eq!(sys.green(3, 3).unwrap(), sys.p.at(3));
    }

    #[test]
    fn walker_matches_direct_kernels() {
        let sys = diag_system(0.3);
        let mut w = sys.green_walker(2);
        for _ in 0..6 {
            let (i, g) = w.next_left().unwrap();
            assert!((g - sys.green(2, i).unwrap()).abs().max() < 1e-14);
            let (i, g) = w.next_right().unwrap();
            assert!((g - sys.green(2, i).unwrap()).abs().max() < 1e-14);
        }
    }

    #[test]
    fn singular_operator_is_reported_with_index() {
        let space = SpaceSpec::new(2, 0, NormKind::Max).unwrap();
        let a = OperatorSeq::from_fn(2, |n| {
            if n == 3 {
                Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])
            } else {
                Mat::identity(2, 2)
            }
        });
        let sys = SystemSpec::new(
            space,
            a,
            WeightSeq::constant(Mat::identity(2, 2)),
            Arc::new(ZeroCoupling::new(2, 0)),
            Arc::new(IdentityDriver::new(0)),
        )
        .unwrap();
        match sys.transition(0, 5) {
            Err(Error::SingularOperator { index, .. }) => assert_eq!(index, 3),
            other => panic!("expected singular operator, got {other:?}"),
        }
    }

    #[test]
    fn zero_dim_x_rejected() {
        assert!(SpaceSpec::new(0, 1, NormKind::Max).is_err());
    }
}
