// SPDX-License-Identifier: Apache-2.0

//! First derivatives of solutions and conjugacies, and a central-difference
//! harness to check them.
//!
//! Along a coupled trajectory the tangents obey
//!
//! ```text
//! forward   X_{j+1} = (A_j + ∂_u f_j) X_j
//!           Ξ_{j+1} = (A_j + ∂_u f_j) Ξ_j + ∂_v f_j Y_j,     Y_{j+1} = Dg_j Y_j
//! backward  X_j = L X_{j+1},  Ξ_j = L (Ξ_{j+1} − ∂_v f_j Y_j),  Y_j = Dg_j^{-1} Y_{j+1}
//! ```
//!
//! with `L = (A_j + ∂_u f_j)^{-1}`, all partials taken at `(x_j, y_j)`.

use serde::{Deserialize, Serialize};

use crate::conjugacy::{ConjugacyEngine, RowInfo};
use crate::error::{Error, Result};
use crate::evolution::{backward_step, SolveOptions};
use crate::linalg::{frobenius, operator_norm, solve, Mat, Vector};
use crate::system::SystemSpec;

/// `x_2(k, n, ξ, η)`, `y(k, n, η)` and their Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionJacobians {
    pub x: Vector,
    pub y: Vector,
    pub dx_dxi: Mat,
    pub dx_deta: Mat,
    pub dy_deta: Mat,
}

struct Tangent {
    x: Mat,
    xe: Mat,
    y: Mat,
}

impl Tangent {
    fn identity(dx: usize, dy: usize) -> Self {
        Self {
            x: Mat::identity(dx, dx),
            xe: Mat::zeros(dx, dy),
            y: Mat::identity(dy, dy),
        }
    }
}

fn forward_tangent(sys: &SystemSpec, j: i64, a: &Mat, x: &Vector, y: &Vector, t: &Tangent) -> Tangent {
    let fu = a + sys.f.jac_x(j, x, y);
    let mut xe = &fu * &t.xe;
    let mut ny = t.y.clone();
    if sys.dim_y() > 0 {
        xe += sys.f.jac_y(j, x, y) * &t.y;
        ny = sys.g.jac(j, y) * &t.y;
    }
    Tangent { x: &fu * &t.x, xe, y: ny }
}

/// Tangent at `j` from the tangent at `j + 1`; `(x, y)` is the point at `j`.
fn backward_tangent(sys: &SystemSpec, j: i64, a: &Mat, x: &Vector, y: &Vector, t: &Tangent) -> Result<Tangent> {
    let fu = a + sys.f.jac_x(j, x, y);
    let singular = || Error::Numerical(format!("A_{j} + df_{j}/du is singular on the trajectory"));
    let ny = if sys.dim_y() > 0 {
        solve(&sys.g.jac(j, y), &t.y).ok_or_else(|| Error::Numerical(format!("Dg_{j} is singular")))?
    } else {
        t.y.clone()
    };
    let mut rhs_e = t.xe.clone();
    if sys.dim_y() > 0 {
        rhs_e -= sys.f.jac_y(j, x, y) * &ny;
    }
    let dx = t.x.ncols();
    let mut rhs = Mat::zeros(dx, dx + rhs_e.ncols());
    rhs.columns_mut(0, dx).copy_from(&t.x);
    rhs.columns_mut(dx, rhs_e.ncols()).copy_from(&rhs_e);
    let sol = solve(&fu, &rhs).ok_or_else(singular)?;
    Ok(Tangent {
        x: sol.columns(0, dx).into_owned(),
        xe: sol.columns(dx, rhs_e.ncols()).into_owned(),
        y: ny,
    })
}

/// All three solution Jacobians at `(k, n)`.
pub fn solution_jacobians(
    sys: &SystemSpec,
    k: i64,
    n: i64,
    xi: &Vector,
    eta: &Vector,
    opts: &SolveOptions,
) -> Result<SolutionJacobians> {
    let (dx, dy) = (sys.dim_x(), sys.dim_y());
    let mut t = Tangent::identity(dx, dy);
    let mut x = xi.clone();
    let mut y = eta.clone();
    if k > n {
        for j in n..k {
            let a = sys.a.at(j);
            t = forward_tangent(sys, j, &a, &x, &y, &t);
            x = &a * &x + sys.f.eval(j, &x, &y);
            if dy > 0 {
                y = sys.g.eval(j, &y);
            }
        }
    } else if k < n {
        let per = SolveOptions {
            fixed_point_tol: opts.fixed_point_tol / (n - k) as f64,
            ..*opts
        };
        for j in (k..n).rev() {
            if dy > 0 {
                y = sys.g.eval_inv(j, &y);
            }
            x = backward_step(sys, j, &x, &y, &per)?;
            t = backward_tangent(sys, j, &sys.a.at(j), &x, &y, &t)?;
        }
    }
    Ok(SolutionJacobians {
        x,
        y,
        dx_dxi: t.x,
        dx_deta: t.xe,
        dy_deta: t.y,
    })
}

/// `∂x_2(k, n, ξ, η)/∂ξ`.
pub fn d_x2_dxi(sys: &SystemSpec, k: i64, n: i64, xi: &Vector, eta: &Vector, opts: &SolveOptions) -> Result<Mat> {
    solution_jacobians(sys, k, n, xi, eta, opts).map(|s| s.dx_dxi)
}

/// `∂x_2(k, n, ξ, η)/∂η`.
pub fn d_x2_deta(sys: &SystemSpec, k: i64, n: i64, xi: &Vector, eta: &Vector, opts: &SolveOptions) -> Result<Mat> {
    solution_jacobians(sys, k, n, xi, eta, opts).map(|s| s.dx_deta)
}

/// `∂y(k, n, η)/∂η`.
pub fn d_y_deta(sys: &SystemSpec, k: i64, n: i64, eta: &Vector) -> Result<Mat> {
    let dy = sys.dim_y();
    let mut m = Mat::identity(dy, dy);
    if dy == 0 {
        return Ok(m);
    }
    let mut y = eta.clone();
    if k > n {
        for j in n..k {
            m = sys.g.jac(j, &y) * m;
            y = sys.g.eval(j, &y);
        }
    } else {
        for j in (k..n).rev() {
            y = sys.g.eval_inv(j, &y);
            m = solve(&sys.g.jac(j, &y), &m).ok_or_else(|| Error::Numerical(format!("Dg_{j} is singular")))?;
        }
    }
    Ok(m)
}

/// A truncated derivative series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesJacobian {
    pub value: Mat,
    /// Bound on the norm of the omitted terms, when certified.
    pub tail_bound: Option<f64>,
    pub half_width: u32,
}

/// `∂h̄_n/∂ξ` and `∂h̄_n/∂η` at `(ξ, η)`.
pub fn barh_jacobians(
    engine: &ConjugacyEngine,
    n: i64,
    xi: &Vector,
    eta: &Vector,
) -> Result<(SeriesJacobian, SeriesJacobian)> {
    let sys = engine.sys();
    let info = engine.row(n)?;
    let (dx, dy) = (sys.dim_x(), sys.dim_y());
    let mut d_xi = Mat::zeros(dx, dx);
    let mut d_eta = Mat::zeros(dx, dy);
    if let Some(tangents) = sweep(engine, &info, xi, eta)? {
        for (k, x, y, t) in tangents {
            let e = info.row.entry(k).expect("row covers its active range");
            if e.green_norm == 0.0 {
                continue;
            }
            let fu = sys.f.jac_x(k, &x, &y);
            d_xi -= &e.green * (&fu * &t.x);
            if dy > 0 {
                d_eta -= &e.green * (&fu * &t.xe + sys.f.jac_y(k, &x, &y) * &t.y);
            }
        }
    }
    let tail = |s: &Result<crate::series::SeriesEstimate>| s.as_ref().ok().and_then(|s| s.is_converged().then_some(s.tail_bound).flatten());
    Ok((
        SeriesJacobian {
            value: d_xi,
            tail_bound: tail(&info.first_full),
            half_width: info.half_width,
        },
        SeriesJacobian {
            value: d_eta,
            tail_bound: if dy == 0 { Some(0.0) } else { tail(&info.second) },
            half_width: info.half_width,
        },
    ))
}

type Swept = (i64, Vector, Vector, Tangent);

/// Points and tangents at every active `k`, in increasing `k`.
fn sweep(
    engine: &ConjugacyEngine,
    info: &RowInfo,
    xi: &Vector,
    eta: &Vector,
) -> Result<Option<Vec<Swept>>> {
    let sys = engine.sys();
    let (Some(tr), Some((lo, hi)), Some(ops)) = (engine.trajectory(info, xi, eta)?, info.active, info.ops.as_ref()) else {
        return Ok(None);
    };
    let n = info.n;
    let (dx, dy) = (sys.dim_x(), sys.dim_y());
    let (tlo, thi) = (lo.min(n), hi.max(n));
    let mut tangents: Vec<Option<Tangent>> = (tlo..=thi).map(|_| None).collect();
    let at = |k: i64| (k - tlo) as usize;
    tangents[at(n)] = Some(Tangent::identity(dx, dy));
    for j in n..thi {
        let prev = tangents[at(j)].as_ref().expect("filled in order");
        let next = forward_tangent(sys, j, ops.a(j), tr.x(j), tr.y(j), prev);
        tangents[at(j + 1)] = Some(next);
    }
    for j in (tlo..n).rev() {
        let prev = tangents[at(j + 1)].as_ref().expect("filled in order");
        let next = backward_tangent(sys, j, ops.a(j), tr.x(j), tr.y(j), prev)?;
        tangents[at(j)] = Some(next);
    }
    Ok(Some(
        (lo..=hi)
            .map(|k| {
                let t = tangents[at(k)].take().expect("filled");
                (k, tr.x(k).clone(), tr.y(k).clone(), t)
            })
            .collect(),
    ))
}

pub fn d_barh_dxi(engine: &ConjugacyEngine, n: i64, xi: &Vector, eta: &Vector) -> Result<SeriesJacobian> {
    barh_jacobians(engine, n, xi, eta).map(|(a, _)| a)
}

pub fn d_barh_deta(engine: &ConjugacyEngine, n: i64, xi: &Vector, eta: &Vector) -> Result<SeriesJacobian> {
    barh_jacobians(engine, n, xi, eta).map(|(_, b)| b)
}

/// Jacobians of `h_n`, obtained from those of `h̄_n` at the shifted point
/// `ξ + h_n(ξ, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyJacobians {
    pub h: Vector,
    pub shifted: Vector,
    pub d_barh_dxi: SeriesJacobian,
    pub d_barh_deta: SeriesJacobian,
    /// `R = −(I + D)^{-1} D` with `D = ∂h̄_n/∂u` at the shifted point.
    pub r: Mat,
    /// `R̃ = −(I + D)^{-1} ∂h̄_n/∂v`.
    pub r_tilde: Mat,
    /// `|(I + R)(I + D) − I|`.
    pub resolvent_defect: f64,
}

pub fn h_jacobians(engine: &ConjugacyEngine, n: i64, xi: &Vector, eta: &Vector) -> Result<ConjugacyJacobians> {
    let h = engine.h(n, xi, eta)?;
    let shifted = xi + &h;
    let (d, de) = barh_jacobians(engine, n, &shifted, eta)?;
    let dx = engine.sys().dim_x();
    let id = Mat::identity(dx, dx);
    let resolvent = &id + &d.value;
    let fail = || Error::Numerical(format!("I + dh̄_{n}/du is singular"));
    let r = -solve(&resolvent, &d.value).ok_or_else(fail)?;
    let r_tilde = -solve(&resolvent, &de.value).ok_or_else(fail)?;
    let resolvent_defect = operator_norm(&((&id + &r) * &resolvent - &id), engine.sys().norm_kind());
    Ok(ConjugacyJacobians {
        h,
        shifted,
        d_barh_dxi: d,
        d_barh_deta: de,
        r,
        r_tilde,
        resolvent_defect,
    })
}

pub fn d_h_dxi(engine: &ConjugacyEngine, n: i64, xi: &Vector, eta: &Vector) -> Result<Mat> {
    h_jacobians(engine, n, xi, eta).map(|j| j.r)
}

pub fn d_h_deta(engine: &ConjugacyEngine, n: i64, xi: &Vector, eta: &Vector) -> Result<Mat> {
    h_jacobians(engine, n, xi, eta).map(|j| j.r_tilde)
}

/// Central differences `(F(p + s e_i) − F(p − s e_i)) / 2s`, one column per
/// coordinate of `point`.
pub fn fd_jacobian(mut fun: impl FnMut(&Vector) -> Vector, point: &Vector, step: f64) -> Mat {
    try_fd_jacobian(|p| Ok::<_, std::convert::Infallible>(fun(p)), point, step).unwrap_or_else(|e| match e {})
}

pub fn try_fd_jacobian<E>(
    mut fun: impl FnMut(&Vector) -> std::result::Result<Vector, E>,
    point: &Vector,
    step: f64,
) -> std::result::Result<Mat, E> {
    let mut cols = Vec::with_capacity(point.len());
    let mut p = point.clone();
    for i in 0..point.len() {
        p[i] = point[i] + step;
        let plus = fun(&p)?;
        p[i] = point[i] - step;
        let minus = fun(&p)?;
        p[i] = point[i];
        cols.push((plus - minus) / (2.0 * step));
    }
    if cols.is_empty() {
        let rows = fun(point)?.len();
        return Ok(Mat::zeros(rows, 0));
    }
    Ok(Mat::from_columns(&cols))
}

/// `|A − B|_F / max(1, |A|_F)`.
pub fn rel_error(analytic: &Mat, fd: &Mat) -> f64 {
    frobenius(&(analytic - fd)) / frobenius(analytic).max(1.0)
}

/// An analytic Jacobian next to its finite-difference estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub analytic: Mat,
    pub finite_difference: Mat,
    pub rel_error: f64,
    pub fd_step: f64,
    /// Error at ten times the step, computed when the first comparison fails.
    pub coarse_rel_error: Option<f64>,
}

impl JacobianReport {
    pub fn new(analytic: Mat, finite_difference: Mat, fd_step: f64) -> Self {
        let rel_error = rel_error(&analytic, &finite_difference);
        Self {
            analytic,
            finite_difference,
            rel_error,
            fd_step,
            coarse_rel_error: None,
        }
    }

    /// What the coarse comparison says about a failure: truncation error
    /// grows about 100x with a 10x step, roundoff shrinks, and a wrong
    /// analytic Jacobian barely moves.
    pub fn diagnosis(&self) -> &'static str {
        match self.coarse_rel_error {
            None => "ok",
            Some(c) if c >= 30.0 * self.rel_error => "fd_truncation",
            Some(c) if c <= 0.3 * self.rel_error => "fd_roundoff",
            Some(_) => "analytic_mismatch",
        }
    }
}

/// Compares `analytic` with central differences of `fun` at `point`,
/// retrying at `10 * step` when `rel_error > threshold`.
pub fn check_jacobian<E>(
    analytic: Mat,
    mut fun: impl FnMut(&Vector) -> std::result::Result<Vector, E>,
    point: &Vector,
    step: f64,
    threshold: f64,
) -> std::result::Result<JacobianReport, E> {
    let fd = try_fd_jacobian(&mut fun, point, step)?;
    let mut rep = JacobianReport::new(analytic, fd, step);
    if rep.rel_error > threshold {
        let coarse = try_fd_jacobian(&mut fun, point, 10.0 * step)?;
        rep.coarse_rel_error = Some(rel_error(&rep.analytic, &coarse));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugacy::EngineConfig;
    use crate::evolution::evolve_coupled;
    use crate::examples::{build, ExampleParams, Variant};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn fd_of_linear_map_is_exact() {
        let a = Mat::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]);
        let j = fd_jacobian(|p| &a * p, &v(&[0.3, 0.1, -2.0]), 1e-5);
        assert!((j - &a).abs().max() < 1e-10);
    }

    #[test]
    fn fd_of_square() {
        let j = fd_jacobian(|p| p.map(|t| t * t), &v(&[3.0]), 1e-6);
        assert!((j[(0, 0)] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn identity_on_the_diagonal() {
        let sys = build(&ExampleParams::new(Variant::EndCfg)).unwrap();
        let s = solution_jacobians(&sys, 2, 2, &v(&[0.1, 0.2]), &v(&[0.3, 0.4]), &SolveOptions::default()).unwrap();
        assert_eq!(s.dx_dxi, Mat::identity(2, 2));
        assert_eq!(s.dx_deta, Mat::zeros(2, 2));
        assert_eq!(s.dy_deta, Mat::identity(2, 2));
    }

    #[test]
    fn linear_case_gives_transition() {
        let mut p = ExampleParams::new(Variant::Ex1);
        p.gamma_scale = 0.0;
        let sys = build(&p).unwrap();
        let e = Vector::zeros(0);
        for (k, n) in [(5, 1), (-3, 2)] {
            let d = d_x2_dxi(&sys, k, n, &v(&[0.4, 0.2]), &e, &SolveOptions::default()).unwrap();
            assert!((d - sys.transition(k, n).unwrap()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn solution_jacobians_match_fd() {
        let sys = build(&ExampleParams::new(Variant::EndCfg)).unwrap();
        let opts = SolveOptions {
            fixed_point_tol: 1e-14,
            max_iters: 200,
        };
        let xi = v(&[0.7, -0.4]);
        let eta = v(&[0.2, 0.9]);
        for (k, n) in [(4, 0), (-4, 0)] {
            let s = solution_jacobians(&sys, k, n, &xi, &eta, &opts).unwrap();
            let fx = fd_jacobian(|p| evolve_coupled(&sys, k, n, p, &eta, &opts).unwrap(), &xi, 1e-6);
            let fe = fd_jacobian(|q| evolve_coupled(&sys, k, n, &xi, q, &opts).unwrap(), &eta, 1e-6);
            let fy = fd_jacobian(|q| crate::evolution::evolve_driver(&sys, k, n, q), &eta, 1e-6);
            assert!(rel_error(&s.dx_dxi, &fx) < 1e-6);
            assert!(rel_error(&s.dx_deta, &fe) < 1e-6);
            assert!(rel_error(&s.dy_deta, &fy) < 1e-6);
            assert_eq!(d_y_deta(&sys, k, n, &eta).unwrap(), s.dy_deta);
        }
    }

    #[test]
    fn conjugacy_jacobians_match_fd() {
        let engine = ConjugacyEngine::new(build(&ExampleParams::new(Variant::EndCfg)).unwrap(), EngineConfig::default()).unwrap();
        let xi = v(&[0.5, 0.1]);
        let eta = v(&[-0.3, 0.6]);
        let n = 1;
        let (d, de) = barh_jacobians(&engine, n, &xi, &eta).unwrap();
        let fx = fd_jacobian(|p| engine.bar_h(n, p, &eta).unwrap(), &xi, 1e-6);
        let fe = fd_jacobian(|q| engine.bar_h(n, &xi, q).unwrap(), &eta, 1e-6);
        assert!(rel_error(&d.value, &fx) < 1e-6);
        assert!(rel_error(&de.value, &fe) < 1e-6);

        let hj = h_jacobians(&engine, n, &xi, &eta).unwrap();
        assert!(hj.resolvent_defect < 1e-12);
        let h0 = hj.h.clone();
        let hx = fd_jacobian(|p| engine.h_with(n, p, &eta, Some(&h0), 1e-13).unwrap().value, &xi, 1e-6);
        let he = fd_jacobian(|q| engine.h_with(n, &xi, q, Some(&h0), 1e-13).unwrap().value, &eta, 1e-6);
        assert!(rel_error(&hj.r, &hx) < 1e-5);
        assert!(rel_error(&hj.r_tilde, &he) < 1e-5);
    }

    #[test]
    fn diagnosis_labels() {
        let mut r = JacobianReport::new(Mat::identity(1, 1), Mat::identity(1, 1) * 1.01, 1e-6);
        assert_eq!(r.diagnosis(), "ok");
        r.coarse_rel_error = Some(r.rel_error);
        assert_eq!(r.diagnosis(), "analytic_mismatch");
        r.coarse_rel_error = Some(100.0 * r.rel_error);
        assert_eq!(r.diagnosis(), "fd_truncation");
    }
}
