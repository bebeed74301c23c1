// SPDX-License-Identifier: Apache-2.0

//! Solution maps of the linear, coupled and driver recursions, the backward
//! step `T_j`, and the Lipschitz envelopes `C_{k,n}`, `D_{k,n}`, `M_{k,n}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vector_norm, Mat, Vector};
use crate::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub fixed_point_tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            fixed_point_tol: 1e-12,
            max_iters: 200,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_point_tol > 0.0) {
            return Err(Error::InvalidConfig("fixed_point_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Tolerance per backward step for a chain of `steps` steps.
    fn per_step(&self, steps: i64) -> Self {
        Self {
            fixed_point_tol: self.fixed_point_tol / steps.max(1) as f64,
            ..*self
        }
    }
}

/// Result of a Picard iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub value: Vector,
    pub iterations: usize,
    /// `|F_j(T, η) − ξ|` for backward steps; last step size otherwise.
    pub residual: f64,
    /// Largest ratio of consecutive step sizes, over steps large enough for
    /// the ratio to be meaningful.
    pub observed_rate: Option<f64>,
}

/// Stop once a step is below `tol` relative to the iterate. The floor keeps
/// large backward iterates from chasing roundoff.
pub(crate) fn picard_done(step: f64, size: f64, tol: f64) -> bool {
    step <= tol.max(8.0 * f64::EPSILON) * size.max(1.0)
}

pub(crate) fn rate_measurable(prev_step: f64, size: f64) -> bool {
    prev_step > 1e-8 * (1.0 + size)
}

/// `y(k, n, η)`.
pub fn evolve_driver(sys: &SystemSpec, k: i64, n: i64, eta: &Vector) -> Vector {
    if sys.dim_y() == 0 {
        return Vector::zeros(0);
    }
    let mut y = eta.clone();
    if k > n {
        for j in n..k {
            y = sys.g.eval(j, &y);
        }
    } else {
        for j in (k..n).rev() {
            y = sys.g.eval_inv(j, &y);
        }
    }
    y
}

/// `x_1(k, n, ξ) = 𝒜(k, n) ξ`, stepped one operator at a time.
pub fn evolve_linear(sys: &SystemSpec, k: i64, n: i64, xi: &Vector) -> Result<Vector> {
    let mut x = xi.clone();
    if k > n {
        for j in n..k {
            x = sys.a.at(j) * x;
        }
    } else {
        for j in (k..n).rev() {
            x = sys.a.inverse_at(j)? * x;
        }
    }
    Ok(x)
}

/// One forward step `A_j ξ + f_j(ξ, η)`.
pub fn forward_step(sys: &SystemSpec, j: i64, xi: &Vector, eta: &Vector) -> Vector {
    sys.a.at(j) * xi + sys.f.eval(j, xi, eta)
}

/// `T_j(ξ, η)`, the unique `x` with `A_j x + f_j(x, η) = ξ`.
pub fn backward_step(
    sys: &SystemSpec,
    j: i64,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<Vector> {
    backward_step_detailed(sys, j, xi, eta, opts).map(|o| o.value)
}

pub fn backward_step_detailed(
    sys: &SystemSpec,
    j: i64,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<PicardOutcome> {
    let kappa = sys.backward_contraction(j)?;
    if !(kappa < 1.0) {
        return Err(Error::ContractionViolation {
            condition: "|A_j^-1| gamma_j < 1",
            index: j,
            value: kappa,
        });
    }
    let a = sys.a.at(j);
    let a_inv = sys.a.inverse_at(j)?;
    let (value, iterations, observed_rate) = picard_backward(sys, j, &a_inv, xi, eta, opts)?;
    let residual = vector_norm(&(&a * &value + sys.f.eval(j, &value, eta) - xi), sys.norm_kind());
    Ok(PicardOutcome {
        value,
        iterations,
        residual,
        observed_rate,
    })
}

/// Picard iteration `u ← A_j^{-1}(ξ − f_j(u, η))` from `u = A_j^{-1} ξ`.
/// Returns the iterate, the iteration count and the observed rate.
pub(crate) fn picard_backward(
    sys: &SystemSpec,
    j: i64,
    a_inv: &Mat,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<(Vector, usize, Option<f64>)> {
    let kind = sys.norm_kind();
    let base = a_inv * xi;
    if sys.f.gamma(j) == 0.0 && sys.f.mu(j) == 0.0 {
        return Ok((base, 1, None));
    }
    let mut u = base.clone();
    let mut prev_step: Option<f64> = None;
    let mut rate: Option<f64> = None;
    let mut last_step = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let next = &base - a_inv * sys.f.eval(j, &u, eta);
        let step = vector_norm(&(&next - &u), kind);
        let size = vector_norm(&next, kind);
        if let Some(p) = prev_step {
            if rate_measurable(p, size) {
                let r = step / p;
                rate = Some(rate.map_or(r, |old: f64| old.max(r)));
            }
        }
        u = next;
        last_step = step;
        if picard_done(step, size, opts.fixed_point_tol) {
            return Ok((u, it, rate));
        }
        prev_step = Some(step);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        residual: last_step,
    })
}

/// `x_2(k, n, ξ, η)`.
pub fn evolve_coupled(
    sys: &SystemSpec,
    k: i64,
    n: i64,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<Vector> {
    let mut x = xi.clone();
    let mut y = eta.clone();
    if k > n {
        for j in n..k {
            x = forward_step(sys, j, &x, &y);
            y = step_driver(sys, j, &y);
        }
    } else if k < n {
        let per = opts.per_step(n - k);
        for j in (k..n).rev() {
            y = step_driver_back(sys, j, &y);
            x = backward_step(sys, j, &x, &y, &per)?;
        }
    }
    Ok(x)
}

fn step_driver(sys: &SystemSpec, j: i64, y: &Vector) -> Vector {
    if sys.dim_y() == 0 {
        y.clone()
    } else {
        sys.g.eval(j, y)
    }
}

fn step_driver_back(sys: &SystemSpec, j: i64, y: &Vector) -> Vector {
    if sys.dim_y() == 0 {
        y.clone()
    } else {
        sys.g.eval_inv(j, y)
    }
}

/// A coupled trajectory `(x_2(k, n, ξ, η), y(k, n, η))` for `k ∈ [lo, hi]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: i64,
    pub lo: i64,
    pub xs: Vec<Vector>,
    pub ys: Vec<Vector>,
}

impl Trajectory {
    pub fn hi(&self) -> i64 {
        self.lo + self.xs.len() as i64 - 1
    }

    pub fn x(&self, k: i64) -> &Vector {
        &self.xs[(k - self.lo) as usize]
    }

    pub fn y(&self, k: i64) -> &Vector {
        &self.ys[(k - self.lo) as usize]
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.lo && k <= self.hi()
    }
}

/// `A_j`, `A_j^{-1}` and `|A_j^{-1}| γ_j` for `j ∈ [lo, hi]`, evaluated once
/// for repeated trajectory sweeps.
#[derive(Debug, Clone)]
pub struct OperatorTable {
    lo: i64,
    a: Vec<Mat>,
    a_inv: Vec<Mat>,
    kappa: Vec<f64>,
}

impl OperatorTable {
    pub fn build(sys: &SystemSpec, lo: i64, hi: i64) -> Result<Self> {
        let cap = (hi - lo + 1).max(0) as usize;
        let mut t = Self {
            lo,
            a: Vec::with_capacity(cap),
            a_inv: Vec::with_capacity(cap),
            kappa: Vec::with_capacity(cap),
        };
        for j in lo..=hi {
            t.a.push(sys.a.at(j));
            t.a_inv.push(sys.a.inverse_at(j)?);
            t.kappa.push(sys.backward_contraction(j)?);
        }
        Ok(t)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.a.len() as i64 - 1
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        lo >= self.lo && hi <= self.hi()
    }

    pub fn a(&self, j: i64) -> &Mat {
        &self.a[(j - self.lo) as usize]
    }

    pub fn a_inv(&self, j: i64) -> &Mat {
        &self.a_inv[(j - self.lo) as usize]
    }

    pub fn kappa(&self, j: i64) -> f64 {
        self.kappa[(j - self.lo) as usize]
    }
}

/// Coupled trajectory through `(ξ, η)` at time `n` over `[lo, hi]`
/// (`lo ≤ n ≤ hi`).
pub fn coupled_trajectory(
    sys: &SystemSpec,
    n: i64,
    lo: i64,
    hi: i64,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    let table = OperatorTable::build(sys, lo.min(n), hi.max(n))?;
    coupled_trajectory_with(sys, &table, n, lo, hi, xi, eta, opts)
}

/// As [`coupled_trajectory`], reading operators from `table`, which must
/// cover `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_trajectory_with(
    sys: &SystemSpec,
    table: &OperatorTable,
    n: i64,
    lo: i64,
    hi: i64,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    if lo > n || hi < n {
        return Err(Error::InvalidConfig(format!(
            "trajectory window [{lo}, {hi}] must contain {n}"
        )));
    }
    if !table.covers(lo, hi.max(lo + 1) - 1) {
        return Err(Error::InvalidConfig(format!(
            "operator table [{}, {}] does not cover [{lo}, {hi})",
            table.lo(),
            table.hi()
        )));
    }
    let len = (hi - lo + 1) as usize;
    let mut xs = vec![Vector::zeros(0); len];
    let mut ys = vec![Vector::zeros(0); len];
    let at = |k: i64| (k - lo) as usize;
    xs[at(n)] = xi.clone();
    ys[at(n)] = eta.clone();
    for j in n..hi {
        let (x, y) = (&xs[at(j)], &ys[at(j)]);
        let nx = table.a(j) * x + sys.f.eval(j, x, y);
        let ny = step_driver(sys, j, y);
        xs[at(j + 1)] = nx;
        ys[at(j + 1)] = ny;
    }
    let per = opts.per_step(n - lo);
    for j in (lo..n).rev() {
        let kappa = table.kappa(j);
        if !(kappa < 1.0) {
            return Err(Error::ContractionViolation {
                condition: "|A_j^-1| gamma_j < 1",
                index: j,
                value: kappa,
            });
        }
        let y = step_driver_back(sys, j, &ys[at(j + 1)]);
        let (x, _, _) = picard_backward(sys, j, table.a_inv(j), &xs[at(j + 1)], &y, &per)?;
        xs[at(j)] = x;
        ys[at(j)] = y;
    }
    Ok(Trajectory { n, lo, xs, ys })
}

/// Linear trajectory `𝒜(k, n) ξ` together with `y(k, n, η)` for `k ∈ [n, n+steps]`.
pub fn linear_trajectory(
    sys: &SystemSpec,
    n: i64,
    steps: usize,
    xi: &Vector,
    eta: &Vector,
) -> (Vec<Vector>, Vec<Vector>) {
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);
    xs.push(xi.clone());
    ys.push(eta.clone());
    for s in 0..steps {
        let j = n + s as i64;
        xs.push(sys.a.at(j) * &xs[s]);
        ys.push(step_driver(sys, j, &ys[s]));
    }
    (xs, ys)
}

/// `|A_j^{-1}| / (1 − γ_j |A_j^{-1}|)`, the backward Lipschitz factor.
pub fn backward_factor(sys: &SystemSpec, j: i64) -> Result<f64> {
    let inv = sys.op_inv_norm(j)?;
    let denom = 1.0 - sys.f.gamma(j) * inv;
    if !(denom > 0.0) {
        return Err(Error::ContractionViolation {
            condition: "1 - gamma_j |A_j^-1| > 0",
            index: j,
            value: 1.0 - denom,
        });
    }
    Ok(inv / denom)
}

/// Per-step factor of `C_{k,n}`: forward for `j ≥ n`, backward otherwise.
pub fn c_factor(sys: &SystemSpec, j: i64, forward: bool) -> Result<f64> {
    if forward {
        Ok(sys.op_norm(j) + sys.f.gamma(j))
    } else {
        backward_factor(sys, j)
    }
}

pub fn d_factor(sys: &SystemSpec, j: i64, forward: bool) -> f64 {
    if forward {
        sys.g.tau(j)
    } else {
        sys.g.sigma(j)
    }
}

pub fn m_factor(sys: &SystemSpec, j: i64, forward: bool) -> Result<f64> {
    if forward {
        Ok(sys.op_norm(j) + sys.f.gamma(j) + sys.f.rho(j).max(sys.g.tau(j)))
    } else {
        Ok(backward_factor(sys, j)? + sys.g.sigma(j))
    }
}

fn envelope_product(
    k: i64,
    n: i64,
    mut factor: impl FnMut(i64, bool) -> Result<f64>,
) -> Result<f64> {
    let mut acc = 1.0;
    if k > n {
        for j in n..k {
            acc *= factor(j, true)?;
        }
    } else {
        for j in k..n {
            acc *= factor(j, false)?;
        }
    }
    Ok(acc)
}

/// `C_{k,n}`: Lipschitz constant of `ξ ↦ x_2(k, n, ξ, η)`.
pub fn lip_c(sys: &SystemSpec, k: i64, n: i64) -> Result<f64> {
    envelope_product(k, n, |j, fwd| c_factor(sys, j, fwd))
}

/// `D_{k,n}`: Lipschitz constant of `η ↦ y(k, n, η)`.
pub fn lip_d(sys: &SystemSpec, k: i64, n: i64) -> f64 {
    envelope_product(k, n, |j, fwd| Ok(d_factor(sys, j, fwd))).unwrap_or(f64::NAN)
}

/// `M_{k,n}`: Lipschitz constant of `η ↦ x_2(k, n, ξ, η)`.
pub fn lip_m(sys: &SystemSpec, k: i64, n: i64) -> Result<f64> {
    envelope_product(k, n, |j, fwd| m_factor(sys, j, fwd))
}
