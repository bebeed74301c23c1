// SPDX-License-Identifier: Apache-2.0

//! Dense linear algebra helpers over `nalgebra` dynamic matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Vector norm used on both X and Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Max,
    Euclidean,
}

impl std::str::FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(NormKind::Max),
            "euclidean" => Ok(NormKind::Euclidean),
            other => Err(format!("unknown norm '{other}' (expected max|euclidean)")),
        }
    }
}

pub fn vector_norm(v: &Vector, kind: NormKind) -> f64 {
    match kind {
        NormKind::Max => v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())),
        NormKind::Euclidean => v.norm(),
    }
}

/// Induced operator norm. Exact for the max norm (largest absolute row sum);
/// largest singular value for the euclidean norm.
pub fn operator_norm(m: &Mat, kind: NormKind) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    match kind {
        NormKind::Max => m
            .row_iter()
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max),
        NormKind::Euclidean => {
            // Cheap exact path for diagonal matrices, which all built-ins use.
            if m.is_square() && is_diagonal(m) {
                return m.diagonal().iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
            }
            m.clone()
                .singular_values()
                .iter()
                .fold(0.0_f64, |acc, x| acc.max(*x))
        }
    }
}

fn is_diagonal(m: &Mat) -> bool {
    for (j, col) in m.column_iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            if i != j && *x != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Frobenius norm (also defined for empty matrices).
pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inverse by LU factorization; `None` when the matrix is numerically singular.
pub fn invert(m: &Mat) -> Option<Mat> {
    if !m.is_square() {
        return None;
    }
    if m.nrows() == 0 {
        return Some(Mat::zeros(0, 0));
    }
    m.clone().lu().try_inverse()
}

/// Solves `m * X = rhs` by LU.
pub fn solve(m: &Mat, rhs: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(Mat::zeros(0, rhs.ncols()));
    }
    m.clone().lu().solve(rhs)
}

/// Norm of `(x, y)` in the product space: the max of the component norms.
pub fn product_norm(x: &Vector, y: &Vector, kind: NormKind) -> f64 {
    vector_norm(x, kind).max(vector_norm(y, kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_max_norm_is_one() {
        assert_eq!(operator_norm(&Mat::identity(3, 3), NormKind::Max), 1.0);
    }

    #[test]
    fn diagonal_half() {
        let l = 2.0_f64.ln();
        let m = Mat::from_diagonal_element(2, 2, (-l).exp());
        assert!((operator_norm(&m, NormKind::Max) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn max_row_sum_by_hand() {
        // rows: |1|+|2| = 3, |3|+|4| = 7
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(operator_norm(&m, NormKind::Max), 7.0);
    }

    #[test]
    fn spectral_norm_matches_closed_form() {
        // [[1,2],[3,4]]: sigma_max^2 is the largest eigenvalue of M^T M =
        // [[10,14],[14,20]], i.e. 15 + sqrt(221).
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let expected = (15.0 + 221.0_f64.sqrt()).sqrt();
        assert!((operator_norm(&m, NormKind::Euclidean) - expected).abs() < 1e-10);
    }

    #[test]
    fn rotation_norms() {
        let (s, c) = 0.3_f64.sin_cos();
        let r = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!((operator_norm(&r, NormKind::Euclidean) - 1.0).abs() < 1e-12);
        assert!((operator_norm(&r, NormKind::Max) - (c.abs() + s.abs())).abs() < 1e-15);
    }

    #[test]
    fn empty_matrices() {
        assert_eq!(operator_norm(&Mat::zeros(2, 0), NormKind::Max), 0.0);
        assert_eq!(frobenius(&Mat::zeros(0, 0)), 0.0);
        assert_eq!(invert(&Mat::zeros(0, 0)).unwrap().nrows(), 0);
    }

    #[test]
    fn singular_has_no_inverse() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(invert(&m).is_none());
    }
}
