// SPDX-License-Identifier: Apache-2.0

//! Concrete couplings and drivers used by the built-in systems and tests.

use std::sync::Arc;

use crate::linalg::{operator_norm, Mat, NormKind, Vector};
use crate::system::{Coupling, Driver};

/// `f_n ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroCoupling {
    dim_x: usize,
    dim_y: usize,
}

impl ZeroCoupling {
    pub fn new(dim_x: usize, dim_y: usize) -> Self {
        Self { dim_x, dim_y }
    }
}

impl Coupling for ZeroCoupling {
    fn eval(&self, _n: i64, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(self.dim_x)
    }
    fn jac_x(&self, _n: i64, _x: &Vector, _y: &Vector) -> Mat {
        Mat::zeros(self.dim_x, self.dim_x)
    }
    fn jac_y(&self, _n: i64, _x: &Vector, _y: &Vector) -> Mat {
        Mat::zeros(self.dim_x, self.dim_y)
    }
    fn mu(&self, _n: i64) -> f64 {
        0.0
    }
    fn gamma(&self, _n: i64) -> f64 {
        0.0
    }
    fn rho(&self, _n: i64) -> f64 {
        0.0
    }
}

/// Smooth saturation `s : R^d → R^d` with `|s| ≤ 1` and Lipschitz constant 1
/// in the matching norm.
///
/// * max norm: componentwise `tanh`;
/// * euclidean norm: radial `z / sqrt(1 + |z|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Saturation(pub NormKind);

impl Saturation {
    pub fn eval(&self, z: &Vector) -> Vector {
        match self.0 {
            NormKind::Max => z.map(f64::tanh),
            NormKind::Euclidean => z / (1.0 + z.norm_squared()).sqrt(),
        }
    }

    pub fn jac(&self, z: &Vector) -> Mat {
        let d = z.len();
        match self.0 {
            NormKind::Max => Mat::from_diagonal(&z.map(|v| {
                let t = v.tanh();
                1.0 - t * t
            })),
            NormKind::Euclidean => {
                let w = 1.0 + z.norm_squared();
                (Mat::identity(d, d) - z * z.transpose() / w) / w.sqrt()
            }
        }
    }
}

/// `f_n(x, y) = γ_n s(x + β E y)` where `E` copies the first
/// `min(dim_x, dim_y)` coordinates of `y` into X.
///
/// Constants: `μ_n = γ_n`, Lipschitz in x `γ_n`, Lipschitz in y `β γ_n`.
#[derive(Clone)]
pub struct SaturatingCoupling {
    dim_x: usize,
    dim_y: usize,
    sat: Saturation,
    gamma: Arc<dyn Fn(i64) -> f64 + Send + Sync>,
    y_gain: f64,
}

impl SaturatingCoupling {
    pub fn new(
        dim_x: usize,
        dim_y: usize,
        norm: NormKind,
        gamma: impl Fn(i64) -> f64 + Send + Sync + 'static,
        y_gain: f64,
    ) -> Self {
        Self {
            dim_x,
            dim_y,
            sat: Saturation(norm),
            gamma: Arc::new(gamma),
            y_gain: y_gain.abs(),
        }
    }

    fn embed(&self, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim_x);
        for i in 0..self.dim_x.min(self.dim_y) {
            out[i] = y[i];
        }
        out
    }

    fn embedding(&self) -> Mat {
        let mut e = Mat::zeros(self.dim_x, self.dim_y);
        for i in 0..self.dim_x.min(self.dim_y) {
            e[(i, i)] = 1.0;
        }
        e
    }

    fn argument(&self, x: &Vector, y: &Vector) -> Vector {
        if self.dim_y == 0 || self.y_gain == 0.0 {
            x.clone()
        } else {
            x + self.embed(y) * self.y_gain
        }
    }
}

impl Coupling for SaturatingCoupling {
    fn eval(&self, n: i64, x: &Vector, y: &Vector) -> Vector {
        let g = (self.gamma)(n);
        if g == 0.0 {
            return Vector::zeros(self.dim_x);
        }
        self.sat.eval(&self.argument(x, y)) * g
    }

    fn jac_x(&self, n: i64, x: &Vector, y: &Vector) -> Mat {
        let g = (self.gamma)(n);
        if g == 0.0 {
            return Mat::zeros(self.dim_x, self.dim_x);
        }
        self.sat.jac(&self.argument(x, y)) * g
    }

    fn jac_y(&self, n: i64, x: &Vector, y: &Vector) -> Mat {
        let g = (self.gamma)(n);
        if g == 0.0 || self.y_gain == 0.0 || self.dim_y == 0 {
            return Mat::zeros(self.dim_x, self.dim_y);
        }
        self.sat.jac(&self.argument(x, y)) * self.embedding() * (g * self.y_gain)
    }

    fn mu(&self, n: i64) -> f64 {
        (self.gamma)(n)
    }

    fn gamma(&self, n: i64) -> f64 {
        (self.gamma)(n)
    }

    fn rho(&self, n: i64) -> f64 {
        if self.dim_y == 0 || self.dim_x == 0 {
            0.0
        } else {
            self.y_gain * (self.gamma)(n)
        }
    }
}

/// `g_n = Id` on R^dim. With `dim = 0` this is the trivial driver.
#[derive(Debug, Clone, Copy)]
pub struct IdentityDriver {
    dim: usize,
}

impl IdentityDriver {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Driver for IdentityDriver {
    fn eval(&self, _n: i64, y: &Vector) -> Vector {
        y.clone()
    }
    fn eval_inv(&self, _n: i64, y: &Vector) -> Vector {
        y.clone()
    }
    fn jac(&self, _n: i64, _y: &Vector) -> Mat {
        Mat::identity(self.dim, self.dim)
    }
    fn tau(&self, _n: i64) -> f64 {
        if self.dim == 0 {
            0.0
        } else {
            1.0
        }
    }
    fn sigma(&self, n: i64) -> f64 {
        self.tau(n)
    }
}

/// Planar driver `g(y) = R(α) S_ε(y)` with the shear
/// `S_ε(y) = (y_1 + ε sin y_2, y_2)`. With `ε = 0` this is a rotation.
#[derive(Debug, Clone, Copy)]
pub struct RotationDriver {
    angle: f64,
    shear: f64,
    norm: NormKind,
}

impl RotationDriver {
    pub fn new(angle: f64, norm: NormKind) -> Self {
        Self {
            angle,
            shear: 0.0,
            norm,
        }
    }

    pub fn with_shear(mut self, shear: f64) -> Self {
        self.shear = shear;
        self
    }

    pub fn rotation(&self) -> Mat {
        rotation(self.angle)
    }

    fn shear_lipschitz(&self) -> f64 {
        let e = self.shear.abs();
        match self.norm {
            NormKind::Max => 1.0 + e,
            NormKind::Euclidean => 0.5 * (e + (e * e + 4.0).sqrt()),
        }
    }
}

pub fn rotation(angle: f64) -> Mat {
    let (s, c) = angle.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

impl Driver for RotationDriver {
    fn eval(&self, _n: i64, y: &Vector) -> Vector {
        let sheared = Vector::from_vec(vec![y[0] + self.shear * y[1].sin(), y[1]]);
        self.rotation() * sheared
    }

    fn eval_inv(&self, _n: i64, y: &Vector) -> Vector {
        let w = self.rotation().transpose() * y;
        Vector::from_vec(vec![w[0] - self.shear * w[1].sin(), w[1]])
    }

    fn jac(&self, _n: i64, y: &Vector) -> Mat {
        let ds = Mat::from_row_slice(2, 2, &[1.0, self.shear * y[1].cos(), 0.0, 1.0]);
        self.rotation() * ds
    }

    fn tau(&self, _n: i64) -> f64 {
        operator_norm(&self.rotation(), self.norm) * self.shear_lipschitz()
    }

    fn sigma(&self, _n: i64) -> f64 {
        operator_norm(&self.rotation().transpose(), self.norm) * self.shear_lipschitz()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector_norm;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn rotation_driver_round_trip() {
        let d = RotationDriver::new(0.4, NormKind::Euclidean).with_shear(0.3);
        let y = v(&[0.7, -1.2]);
        let back = d.eval_inv(0, &d.eval(0, &y));
        assert!((back - y).norm() < 1e-14);
    }

    #[test]
    fn three_rotations_compose() {
        let d = RotationDriver::new(0.25, NormKind::Euclidean);
        let y = v(&[1.0, 0.5]);
        let out = d.eval(2, &d.eval(1, &d.eval(0, &y)));
        let expected = rotation(0.75) * &y;
        assert!((out - expected).norm() < 1e-12);
    }

    #[test]
    fn saturation_bounds_hold() {
        for kind in [NormKind::Max, NormKind::Euclidean] {
            let s = Saturation(kind);
            let z = v(&[3.0, -40.0, 0.2]);
            assert!(vector_norm(&s.eval(&z), kind) <= 1.0);
            assert!(operator_norm(&s.jac(&z), kind) <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn saturating_jacobian_matches_difference_quotient() {
        let f = SaturatingCoupling::new(2, 2, NormKind::Euclidean, |n| 0.1 / (1 + n.abs()) as f64, 0.5);
        let x = v(&[0.3, -0.4]);
        let y = v(&[0.9, 0.1]);
        let h = 1e-6;
        let jx = f.jac_x(1, &x, &y);
        let jy = f.jac_y(1, &x, &y);
        for i in 0..2 {
            let mut e = Vector::zeros(2);
            e[i] = h;
            let dx = (f.eval(1, &(&x + &e), &y) - f.eval(1, &(&x - &e), &y)) / (2.0 * h);
            let dy = (f.eval(1, &x, &(&y + &e)) - f.eval(1, &x, &(&y - &e))) / (2.0 * h);
            assert!((dx - jx.column(i)).norm() < 1e-9);
            assert!((dy - jy.column(i)).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_gain_removes_y_dependence() {
        let f = SaturatingCoupling::new(2, 2, NormKind::Max, |_| 0.2, 0.0);
        assert_eq!(f.rho(0), 0.0);
        assert_eq!(f.jac_y(0, &v(&[1.0, 1.0]), &v(&[2.0, 2.0])), Mat::zeros(2, 2));
    }
}
