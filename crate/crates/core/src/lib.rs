// SPDX-License-Identifier: Apache-2.0

//! Smooth linearization of nonautonomous coupled difference systems.
//!
//! The coupled system
//!
//! ```text
//! x_{n+1} = A_n x_n + f_n(x_n, y_n),    y_{n+1} = g_n(y_n)
//! ```
//!
//! is conjugated to its partially linearized form `x_{n+1} = A_n x_n,
//! y_{n+1} = g_n(y_n)` by maps `H_n(x, y) = (x + h_n(x, y), y)` and
//! `H̄_n(x, y) = (x + h̄_n(x, y), y)`. This crate evaluates both conjugacies
//! numerically, certifies the summability and contraction conditions they rest
//! on, and checks their first derivatives against finite differences.
//!
//! Module map:
//!
//! * [`system`]: operator sequences, transition operators and Green kernels.
//! * [`evolution`]: forward/backward solution maps and Lipschitz envelopes.
//! * [`kernel`]: rows of the Green kernel and the weighted series terms.
//! * [`series`] and [`hypotheses`]: truncated bi-infinite sums with tail bounds.
//! * [`conjugacy`]: the series `h̄_n` and the fixed point `h_n`.
//! * [`derivatives`]: analytic Jacobians and the finite-difference harness.
//! * [`examples`]: the built-in parametric systems; [`sampling`]: probe grids.
//! * [`report`]: run configuration, report assembly and CSV/JSON output.

// `!(a < b)` is deliberate throughout: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugacy;
pub mod derivatives;
pub mod error;
pub mod evolution;
pub mod examples;
pub mod hypotheses;
pub mod kernel;
pub mod linalg;
pub mod maps;
pub mod report;
pub mod sampling;
pub mod series;
pub mod system;

pub use conjugacy::{ConjugacyEngine, EngineConfig};
pub use error::{Error, Result};
pub use evolution::SolveOptions;
pub use examples::{ExampleParams, Variant};
pub use linalg::{Mat, NormKind, Vector};
pub use report::{RunConfig, RunReport};
pub use series::{SeriesEstimate, Verdict};
pub use system::{SpaceSpec, SystemSpec};
