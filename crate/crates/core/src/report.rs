// SPDX-License-Identifier: Apache-2.0

//! Run configuration, the four run phases, and JSON/CSV output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugacy::{ConjugacyEngine, EngineConfig};
use crate::derivatives::{barh_jacobians, check_jacobian, h_jacobians, solution_jacobians, JacobianReport};
use crate::error::{Error, Result};
use crate::evolution::{evolve_coupled, evolve_driver};
use crate::examples::{build, probe_dim, split_point, ExampleParams, Variant};
use crate::hypotheses::{check_all, HypothesisConfig, HypothesisReport};
use crate::linalg::{frobenius, operator_norm, Vector};
use crate::sampling::GridSpec;
use crate::series::SeriesConfig;
use crate::system::SystemSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "NL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub equivariance: f64,
    /// Defaults to `fp_tol + 10 series_tol` when unset.
    pub inverse: Option<f64>,
    pub jacobian: f64,
    pub resolvent: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            equivariance: 1e-7,
            inverse: None,
            jacobian: 1e-4,
            resolvent: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub system: ExampleParams,
    pub window_halfwidth: u32,
    pub window_cap: u32,
    pub n_range: (i64, i64),
    /// Times at which conjugacies and Jacobians are probed. Empty means the
    /// two ends and the middle of `n_range`.
    pub probe_times: Vec<i64>,
    pub probe_grid: GridSpec,
    pub series_tol: f64,
    pub fp_tol: f64,
    pub fd_step: f64,
    /// Fixed-point residual used when differencing `h_n`.
    pub fd_fp_tol: f64,
    pub seed: u64,
    /// Steps of the equivariance check.
    pub steps: usize,
    /// Random probes for the sampled hypotheses.
    pub hypothesis_probes: usize,
    /// Offsets `k − n` at which solution Jacobians are checked.
    pub solution_offsets: Vec<i64>,
    pub thresholds: Thresholds,
    /// Run the conjugacy phases even when the hypotheses are not certified.
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            system: ExampleParams::new(Variant::Ex1),
            window_halfwidth: engine.window_halfwidth,
            window_cap: engine.window_cap,
            n_range: (-10, 10),
            probe_times: Vec::new(),
            probe_grid: GridSpec::default(),
            series_tol: engine.series_tol,
            fp_tol: engine.fp_tol,
            fd_step: 1e-6,
            fd_fp_tol: 1e-13,
            seed: 0,
            steps: 10,
            hypothesis_probes: 200,
            solution_offsets: vec![-4, 4],
            thresholds: Thresholds::default(),
            force: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let positive = [
            ("series_tol", self.series_tol),
            ("fp_tol", self.fp_tol),
            ("fd_step", self.fd_step),
            ("fd_fp_tol", self.fd_fp_tol),
            ("thresholds.equivariance", self.thresholds.equivariance),
            ("thresholds.jacobian", self.thresholds.jacobian),
            ("thresholds.resolvent", self.thresholds.resolvent),
            ("probe_grid.extent", self.probe_grid.extent),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(v) = self.thresholds.inverse {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig("thresholds.inverse must be positive".into()));
            }
        }
        if !(self.probe_grid.jitter >= 0.0 && self.probe_grid.jitter < 1.0) {
            return Err(Error::InvalidConfig("probe_grid.jitter must lie in [0, 1)".into()));
        }
        if self.probe_grid.count == 0 || self.hypothesis_probes == 0 {
            return Err(Error::InvalidConfig("probe counts must be at least 1".into()));
        }
        if self.n_range.0 > self.n_range.1 {
            return Err(Error::InvalidConfig("n_range is empty".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        self.engine_config().validate()
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            window_halfwidth: self.window_halfwidth,
            window_cap: self.window_cap,
            series_tol: self.series_tol,
            fp_tol: self.fp_tol,
            ..EngineConfig::default()
        }
    }

    pub fn hypothesis_config(&self) -> HypothesisConfig {
        HypothesisConfig {
            n_range: self.n_range,
            half_width: self.window_halfwidth,
            probes: self.hypothesis_probes,
            probe_radius: 3.0,
            seed: self.seed,
            series: SeriesConfig::default(),
        }
    }

    pub fn inverse_threshold(&self) -> f64 {
        self.thresholds
            .inverse
            .unwrap_or(self.fp_tol + 10.0 * self.series_tol)
    }

    pub fn times(&self) -> Vec<i64> {
        if !self.probe_times.is_empty() {
            return self.probe_times.clone();
        }
        let (lo, hi) = self.n_range;
        let mut t = vec![lo, lo + (hi - lo) / 2, hi];
        t.dedup();
        t
    }

    /// Every `(n, ξ, η)` probe, times outermost.
    pub fn probes(&self, sys: &SystemSpec) -> Vec<(i64, Vector, Vector)> {
        let pts = self.probe_grid.points(probe_dim(sys), self.seed);
        self.times()
            .into_iter()
            .flat_map(|n| {
                pts.iter().map(move |z| {
                    let (x, y) = split_point(sys, z);
                    (n, x, y)
                })
            })
            .collect()
    }
}

/// A probe that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeError {
    pub n: i64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub kind: String,
    pub message: String,
}

impl ProbeError {
    fn new(n: i64, xi: &Vector, eta: &Vector, e: &Error) -> Self {
        Self {
            n,
            xi: xi.as_slice().to_vec(),
            eta: eta.as_slice().to_vec(),
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub n: i64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    /// `h_n(ξ, η)`.
    pub value: Vec<f64>,
    pub residual: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub threshold: f64,
    pub max: f64,
    /// Maximum of each component of the residual.
    pub components: BTreeMap<String, f64>,
    pub rows: Vec<ResidualRow>,
    pub errors: Vec<ProbeError>,
    pub pass: bool,
}

impl ResidualTable {
    fn new(threshold: f64, rows: Vec<ResidualRow>, components: BTreeMap<String, f64>, errors: Vec<ProbeError>) -> Self {
        let max = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        let pass = errors.is_empty() && !rows.is_empty() && rows.iter().all(|r| r.residual <= threshold);
        Self {
            threshold,
            max,
            components,
            rows,
            errors,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianRow {
    pub n: i64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub name: String,
    pub rel_error: f64,
    pub fd_step: f64,
    pub coarse_rel_error: Option<f64>,
    pub diagnosis: String,
    pub analytic_norm: f64,
}

impl JacobianRow {
    fn new(n: i64, xi: &Vector, eta: &Vector, name: String, rep: &JacobianReport) -> Self {
        Self {
            n,
            xi: xi.as_slice().to_vec(),
            eta: eta.as_slice().to_vec(),
            name,
            rel_error: rep.rel_error,
            fd_step: rep.fd_step,
            coarse_rel_error: rep.coarse_rel_error,
            diagnosis: rep.diagnosis().into(),
            analytic_norm: frobenius(&rep.analytic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: i64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    /// `|∂h̄_n/∂ξ|` at the probe.
    pub norm: f64,
    /// `K_n + J_n + |𝒢(n,n+1)| γ_n`.
    pub bound: f64,
    /// `|(I + R)(I + ∂h̄_n/∂u) − I|`.
    pub resolvent_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianSection {
    pub threshold: f64,
    pub resolvent_threshold: f64,
    /// Worst `rel_error` per Jacobian.
    pub max_rel_error: BTreeMap<String, f64>,
    pub rows: Vec<JacobianRow>,
    pub bounds: Vec<BoundRow>,
    pub errors: Vec<ProbeError>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunVerdict {
    pub pass: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub hypothesis: Option<HypothesisReport>,
    pub equivariance: Option<ResidualTable>,
    pub inverse: Option<ResidualTable>,
    pub jacobians: Option<JacobianSection>,
    /// Wall-clock seconds per phase.
    pub timing: BTreeMap<String, f64>,
    pub verdict: RunVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phases {
    Check,
    Conjugate,
    Derivatives,
    All,
}

struct Run {
    cfg: RunConfig,
    sys: SystemSpec,
    report: RunReport,
}

impl Run {
    fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let sys = build(&cfg.system)?;
        Ok(Self {
            report: RunReport {
                schema_version: SCHEMA_VERSION,
                config: cfg.clone(),
                hypothesis: None,
                equivariance: None,
                inverse: None,
                jacobians: None,
                timing: BTreeMap::new(),
                verdict: RunVerdict {
                    pass: true,
                    failures: Vec::new(),
                },
            },
            cfg: cfg.clone(),
            sys,
        })
    }

    fn fail(&mut self, msg: String) {
        self.report.verdict.pass = false;
        self.report.verdict.failures.push(msg);
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&Self) -> T) -> T {
        let t = Instant::now();
        let out = f(self);
        self.report.timing.insert(phase.into(), t.elapsed().as_secs_f64());
        out
    }

    fn hypothesis(&mut self) -> bool {
        let rep = self.timed("hypothesis", |r| check_all(&r.sys, &r.cfg.hypothesis_config()));
        let ok = rep.pass(self.sys.dim_y() > 0);
        if !ok {
            let mut msg = String::from("hypotheses not certified");
            if let Some((n, w)) = rep.j_witness() {
                msg.push_str(&format!("; J_n divergent at n = {n}: {w}"));
            }
            if let Some((n, e)) = rep.errors.iter().next() {
                msg.push_str(&format!("; n = {n}: {e}"));
            }
            self.fail(msg);
        }
        self.report.hypothesis = Some(rep);
        ok
    }

    fn engine(&self) -> Result<ConjugacyEngine> {
        ConjugacyEngine::new(self.sys.clone(), self.cfg.engine_config())
    }

    fn conjugate(&mut self, engine: &ConjugacyEngine) {
        let probes = self.cfg.probes(&self.sys);
        let steps = self.cfg.steps;
        let results: Vec<_> = self.timed("conjugate", |_| {
            probes
                .par_iter()
                .map(|(n, xi, eta)| {
                    let tail = engine.mu_estimate(*n).ok().and_then(|m| m.tail_bound).unwrap_or(f64::INFINITY);
                    let h = engine.h(*n, xi, eta);
                    let inv = engine.inverse_residuals(*n, xi, eta);
                    let eq = engine.equivariance_residual(*n, xi, eta, steps);
                    (h, inv, eq, tail)
                })
                .collect()
        });
        let mut inv_rows = Vec::new();
        let mut eq_rows = Vec::new();
        let mut inv_errors = Vec::new();
        let mut eq_errors = Vec::new();
        let mut inv_comp = BTreeMap::from([("bar_after_h".to_string(), 0.0f64), ("h_after_bar".to_string(), 0.0)]);
        let mut eq_comp = BTreeMap::from([("forward".to_string(), 0.0f64), ("dual".to_string(), 0.0)]);
        for ((n, xi, eta), (h, inv, eq, tail)) in probes.iter().zip(results) {
            let value = h.as_ref().map(|v| v.as_slice().to_vec()).unwrap_or_default();
            let row = |residual: f64| ResidualRow {
                n: *n,
                xi: xi.as_slice().to_vec(),
                eta: eta.as_slice().to_vec(),
                value: value.clone(),
                residual,
                tail_bound: tail,
            };
            match inv {
                Ok(r) => {
                    bump(&mut inv_comp, "bar_after_h", r.bar_after_h);
                    bump(&mut inv_comp, "h_after_bar", r.h_after_bar);
                    inv_rows.push(row(r.max()));
                }
                Err(e) => inv_errors.push(ProbeError::new(*n, xi, eta, &e)),
            }
            match eq {
                Ok(r) => {
                    bump(&mut eq_comp, "forward", r.forward);
                    bump(&mut eq_comp, "dual", r.dual);
                    eq_rows.push(row(r.max()));
                }
                Err(e) => eq_errors.push(ProbeError::new(*n, xi, eta, &e)),
            }
        }
        let inv = ResidualTable::new(self.cfg.inverse_threshold(), inv_rows, inv_comp, inv_errors);
        let eq = ResidualTable::new(self.cfg.thresholds.equivariance, eq_rows, eq_comp, eq_errors);
        for (name, t) in [("inverse", &inv), ("equivariance", &eq)] {
            if !t.pass {
                let msg = match t.errors.first() {
                    Some(e) => format!("{name}: {} probe(s) failed, first at n = {}: {}", t.errors.len(), e.n, e.message),
                    None => format!("{name}: max residual {:e} above {:e}", t.max, t.threshold),
                };
                self.fail(msg);
            }
        }
        self.report.inverse = Some(inv);
        self.report.equivariance = Some(eq);
    }

    fn derivatives(&mut self, engine: &ConjugacyEngine) {
        let probes = self.cfg.probes(&self.sys);
        let results: Vec<_> = self.timed("derivatives", |r| {
            probes
                .par_iter()
                .map(|(n, xi, eta)| validate_probe(engine, &r.cfg, *n, xi, eta))
                .collect()
        });
        let mut rows = Vec::new();
        let mut bounds = Vec::new();
        let mut errors = Vec::new();
        for ((n, xi, eta), res) in probes.iter().zip(results) {
            match res {
                Ok((jac, bound)) => {
                    rows.extend(jac.iter().map(|(name, rep)| JacobianRow::new(*n, xi, eta, name.clone(), rep)));
                    bounds.push(bound);
                }
                Err(e) => errors.push(ProbeError::new(*n, xi, eta, &e)),
            }
        }
        let mut max_rel_error = BTreeMap::new();
        for r in &rows {
            bump(&mut max_rel_error, &r.name, r.rel_error);
        }
        let th = self.cfg.thresholds;
        let mut failures = Vec::new();
        if let Some(e) = errors.first() {
            failures.push(format!("jacobians: {} probe(s) failed, first at n = {}: {}", errors.len(), e.n, e.message));
        }
        for (name, err) in &max_rel_error {
            if !(*err <= th.jacobian) {
                failures.push(format!("jacobians: {name} rel_error {err:e} above {:e}", th.jacobian));
            }
        }
        if let Some(b) = bounds.iter().find(|b| !(b.norm <= b.bound)) {
            failures.push(format!("jacobians: |dh̄/dξ| = {} exceeds K+J+centre = {} at n = {}", b.norm, b.bound, b.n));
        }
        if let Some(b) = bounds.iter().find(|b| !(b.resolvent_defect <= th.resolvent)) {
            failures.push(format!("jacobians: resolvent defect {:e} at n = {}", b.resolvent_defect, b.n));
        }
        if rows.is_empty() && errors.is_empty() {
            failures.push("jacobians: no probes evaluated".into());
        }
        let pass = failures.is_empty();
        for f in failures {
            self.fail(f);
        }
        self.report.jacobians = Some(JacobianSection {
            threshold: th.jacobian,
            resolvent_threshold: th.resolvent,
            max_rel_error,
            rows,
            bounds,
            errors,
            pass,
        });
    }

    fn run(mut self, phases: Phases) -> Result<RunReport> {
        let certified = self.hypothesis();
        if phases == Phases::Check {
            return Ok(self.report);
        }
        if !certified && !self.cfg.force {
            self.fail("conjugacy phases skipped; rerun with --force to evaluate anyway".into());
            return Ok(self.report);
        }
        let engine = self.engine()?;
        if matches!(phases, Phases::Conjugate | Phases::All) {
            self.conjugate(&engine);
        }
        if matches!(phases, Phases::Derivatives | Phases::All) {
            self.derivatives(&engine);
        }
        Ok(self.report)
    }
}

fn bump(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = map.entry(key.to_string()).or_insert(0.0);
    if v > *e || v.is_nan() {
        *e = v;
    }
}

/// Every Jacobian check at one probe.
pub fn validate_probe(
    engine: &ConjugacyEngine,
    cfg: &RunConfig,
    n: i64,
    xi: &Vector,
    eta: &Vector,
) -> Result<(Vec<(String, JacobianReport)>, BoundRow)> {
    let sys = engine.sys();
    let opts = engine.config().solve;
    let step = cfg.fd_step;
    let th = cfg.thresholds.jacobian;
    let has_y = sys.dim_y() > 0;
    let mut out = Vec::new();

    for off in &cfg.solution_offsets {
        let k = n + off;
        let s = solution_jacobians(sys, k, n, xi, eta, &opts)?;
        let tag = |name: &str| format!("{name}[k=n{off:+}]");
        out.push((tag("d_x2_dxi"), check_jacobian(s.dx_dxi, |p| evolve_coupled(sys, k, n, p, eta, &opts), xi, step, th)?));
        if has_y {
            out.push((tag("d_x2_deta"), check_jacobian(s.dx_deta, |q| evolve_coupled(sys, k, n, xi, q, &opts), eta, step, th)?));
            out.push((
                tag("d_y_deta"),
                check_jacobian(s.dy_deta, |q| Ok::<_, Error>(evolve_driver(sys, k, n, q)), eta, step, th)?,
            ));
        }
    }

    let (d, de) = barh_jacobians(engine, n, xi, eta)?;
    let norm = operator_norm(&d.value, sys.norm_kind());
    out.push(("d_barh_dxi".into(), check_jacobian(d.value, |p| engine.bar_h(n, p, eta), xi, step, th)?));
    if has_y {
        out.push(("d_barh_deta".into(), check_jacobian(de.value, |q| engine.bar_h(n, xi, q), eta, step, th)?));
    }

    let hj = h_jacobians(engine, n, xi, eta)?;
    let h0 = hj.h.clone();
    let tight = cfg.fd_fp_tol;
    out.push((
        "d_h_dxi".into(),
        check_jacobian(hj.r, |p| engine.h_with(n, p, eta, Some(&h0), tight).map(|f| f.value), xi, step, th)?,
    ));
    if has_y {
        out.push((
            "d_h_deta".into(),
            check_jacobian(hj.r_tilde, |q| engine.h_with(n, xi, q, Some(&h0), tight).map(|f| f.value), eta, step, th)?,
        ));
    }
    let bound = BoundRow {
        n,
        xi: xi.as_slice().to_vec(),
        eta: eta.as_slice().to_vec(),
        norm,
        bound: engine.contraction_estimate(n)?,
        resolvent_defect: hj.resolvent_defect,
    };
    Ok((out, bound))
}

pub fn run(cfg: &RunConfig, phases: Phases) -> Result<RunReport> {
    Run::new(cfg)?.run(phases)
}

/// Hypothesis section only.
pub fn cmd_check(cfg: &RunConfig) -> Result<RunReport> {
    run(cfg, Phases::Check)
}

/// Hypotheses, then equivariance and inverse residuals.
pub fn cmd_conjugate(cfg: &RunConfig) -> Result<RunReport> {
    run(cfg, Phases::Conjugate)
}

/// Hypotheses, then the Jacobian checks.
pub fn cmd_derivatives(cfg: &RunConfig) -> Result<RunReport> {
    run(cfg, Phases::Derivatives)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<RunReport> {
    run(cfg, Phases::All)
}

/// A worker pool sized by `NL_THREADS`, if set.
pub fn thread_pool_from_env() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn write<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn coords(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("cannot serialize report: {e}")))
    }

    /// Every table the report contains.
    pub fn tables(&self) -> Vec<CsvTable> {
        let mut out = Vec::new();
        let (dx, dy) = (self.config.system.dim_x(), self.config.system.dim_y());
        if let Some(h) = &self.hypothesis {
            let header = ["n", "k_partial", "k_upper", "k_verdict", "j_partial", "j_upper", "j_verdict", "center", "total_upper", "ac3", "ac9_upper", "ac9_verdict", "error"];
            let rows = (h.basic.n_range.0..=h.basic.n_range.1)
                .map(|n| {
                    let mut r = vec![n.to_string()];
                    match h.ac2.get(&n) {
                        Some(a) => r.extend([
                            fmt_f(a.k.partial_sum),
                            fmt_opt(a.k.upper()),
                            format!("{:?}", a.k.verdict).to_lowercase(),
                            fmt_f(a.j.partial_sum),
                            fmt_opt(a.j.upper()),
                            format!("{:?}", a.j.verdict).to_lowercase(),
                            fmt_f(a.center),
                            fmt_opt(a.total_upper),
                        ]),
                        None => r.extend(std::iter::repeat_n(String::new(), 8)),
                    }
                    r.push(h.ac3.get(&n).copied().unwrap_or(false).to_string());
                    match h.ac9.get(&n) {
                        Some(s) => r.extend([fmt_opt(s.upper()), format!("{:?}", s.verdict).to_lowercase()]),
                        None => r.extend([String::new(), String::new()]),
                    }
                    r.push(h.errors.get(&n).cloned().unwrap_or_default());
                    r
                })
                .collect();
            out.push(CsvTable {
                name: "hypothesis",
                header: header.iter().map(|s| s.to_string()).collect(),
                rows,
            });
        }
        let residual_table = |name: &'static str, t: &ResidualTable| {
            let mut header = vec!["n".to_string()];
            header.extend(coords("xi", dx));
            header.extend(coords("eta", dy));
            header.extend(coords("value", dx));
            header.extend(["residual".to_string(), "tail_bound".to_string()]);
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.n.to_string()];
                    row.extend(r.xi.iter().chain(&r.eta).map(|v| fmt_f(*v)));
                    row.extend((0..dx).map(|i| r.value.get(i).map(|v| fmt_f(*v)).unwrap_or_default()));
                    row.extend([fmt_f(r.residual), fmt_f(r.tail_bound)]);
                    row
                })
                .collect();
            CsvTable { name, header, rows }
        };
        if let Some(t) = &self.equivariance {
            out.push(residual_table("equivariance", t));
        }
        if let Some(t) = &self.inverse {
            out.push(residual_table("inverse", t));
        }
        if let Some(j) = &self.jacobians {
            let mut header = vec!["n".to_string()];
            header.extend(coords("xi", dx));
            header.extend(coords("eta", dy));
            header.extend(["name", "rel_error", "fd_step", "coarse_rel_error", "diagnosis", "analytic_norm"].map(String::from));
            let rows = j
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.n.to_string()];
                    row.extend(r.xi.iter().chain(&r.eta).map(|v| fmt_f(*v)));
                    row.extend([
                        r.name.clone(),
                        fmt_f(r.rel_error),
                        fmt_f(r.fd_step),
                        fmt_opt(r.coarse_rel_error),
                        r.diagnosis.clone(),
                        fmt_f(r.analytic_norm),
                    ]);
                    row
                })
                .collect();
            out.push(CsvTable {
                name: "jacobians",
                header,
                rows,
            });
        }
        out
    }

    /// All tables, each preceded by a `# name` line.
    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        for t in self.tables() {
            buf.extend_from_slice(format!("# {}\n", t.name).as_bytes());
            t.write(&mut buf).map_err(io_err)?;
        }
        String::from_utf8(buf).map_err(|e| Error::Numerical(e.to_string()))
    }

    /// Writes each table as `<stem>.<table>.csv` next to `out`.
    pub fn write_tables_beside(&self, out: &Path) -> Result<Vec<PathBuf>> {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let dir = out.parent().unwrap_or(Path::new(""));
        let mut written = Vec::new();
        for t in self.tables() {
            let path = dir.join(format!("{stem}.{}.csv", t.name));
            let file = std::fs::File::create(&path).map_err(io_err)?;
            t.write(file).map_err(io_err)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("i/o error: {e}"))
}
