// SPDX-License-Identifier: Apache-2.0

//! Rows `k ↦ 𝒢(n, k+1)` of the Green kernel for fixed `n`, together with the
//! weighted terms of every series the crate sums over them.
//!
//! A row is grown outward from `n` one index per side at a time, so each new
//! kernel and each new Lipschitz product costs a single multiplication.

use crate::error::{Error, Result};
use crate::evolution::{backward_factor, c_factor, d_factor, m_factor};
use crate::linalg::{operator_norm, Mat};
use crate::series::{estimate, SeriesConfig, SeriesEstimate, SeriesInput, SeriesKind};
use crate::system::SystemSpec;

/// Terms of the row at index `k`.
#[derive(Debug, Clone)]
pub struct RowEntry {
    pub k: i64,
    /// `𝒢(n, k+1)`.
    pub green: Mat,
    pub green_norm: f64,
    /// `|𝒢(n,k+1)| μ_k`.
    pub mu: f64,
    /// `|𝒢(n,k+1)| γ_k`.
    pub gamma: f64,
    /// `|𝒢(n,k+1)| γ_k C_{k,n}`.
    pub first: f64,
    /// `|𝒢(n,k+1)| (γ_k M_{k,n} + ρ_k D_{k,n})`.
    pub second: f64,
}

#[derive(Debug, Clone, Copy)]
struct Products {
    c: f64,
    d: f64,
    m: f64,
}

impl Products {
    const ONE: Products = Products {
        c: 1.0,
        d: 1.0,
        m: 1.0,
    };
}

#[derive(Debug, Clone)]
pub struct KernelRow {
    n: i64,
    /// `k = n-1, n-2, …`
    left: Vec<RowEntry>,
    /// `k = n, n+1, …`
    right: Vec<RowEntry>,
    /// `𝒜(n, k+1)` for the last left entry.
    left_t: Mat,
    left_prod: Products,
    /// `𝒜(n, k+1)` for the last right entry.
    right_t: Option<Mat>,
    /// `C, D, M` at the next right index.
    right_prod: Products,
    /// First `k < n` where `1 − γ_k |A_k^{-1}| ≤ 0`, with `γ_k |A_k^{-1}|`.
    /// Envelope terms at and beyond it are NaN.
    left_violation: Option<(i64, f64)>,
}

impl KernelRow {
    pub fn new(sys: &SystemSpec, n: i64) -> Self {
        let d = sys.dim_x();
        Self {
            n,
            left: Vec::new(),
            right: Vec::new(),
            left_t: Mat::identity(d, d),
            left_prod: Products::ONE,
            right_t: None,
            right_prod: Products::ONE,
            left_violation: None,
        }
    }

    pub fn build(sys: &SystemSpec, n: i64, half_width: u32) -> Result<Self> {
        let mut row = Self::new(sys, n);
        row.grow(sys, half_width)?;
        Ok(row)
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    /// Largest `K` such that `[n-K, n+K]` is covered.
    pub fn half_width(&self) -> u32 {
        (self.left.len() as u32).min(self.right.len().saturating_sub(1) as u32)
    }

    /// Extends the row to cover `[n - half_width, n + half_width]`.
    pub fn grow(&mut self, sys: &SystemSpec, half_width: u32) -> Result<()> {
        let kind = sys.norm_kind();
        while self.left.len() < half_width as usize {
            let k = self.n - 1 - self.left.len() as i64;
            let i = k + 1;
            if i < self.n {
                self.left_t = &self.left_t * sys.a.at(i);
            }
            let green = &self.left_t * sys.p.at(i);
            match (backward_factor(sys, k), m_factor(sys, k, false)) {
                (Ok(b), Ok(m)) => {
                    self.left_prod = Products {
                        c: self.left_prod.c * b,
                        d: self.left_prod.d * d_factor(sys, k, false),
                        m: self.left_prod.m * m,
                    }
                }
                (Err(Error::ContractionViolation { value, .. }), _)
                | (_, Err(Error::ContractionViolation { value, .. })) => {
                    if self.left_violation.is_none() {
                        self.left_violation = Some((k, value));
                    }
                    self.left_prod = Products {
                        c: f64::NAN,
                        d: f64::NAN,
                        m: f64::NAN,
                    };
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
            let entry = self.entry_at(sys, k, green, self.left_prod, kind);
            self.left.push(entry);
        }
        while self.right.len() < half_width as usize + 1 {
            let k = self.n + self.right.len() as i64;
            let inv = sys.a.inverse_at(k)?;
            let t = match self.right_t.take() {
                Some(prev) => prev * inv,
                None => inv,
            };
            let d = sys.dim_x();
            let green = -(&t * (Mat::identity(d, d) - sys.p.at(k + 1)));
            self.right_t = Some(t);
            let prod = self.right_prod;
            let entry = self.entry_at(sys, k, green, prod, kind);
            self.right.push(entry);
            self.right_prod = Products {
                c: prod.c * c_factor(sys, k, true)?,
                d: prod.d * d_factor(sys, k, true),
                m: prod.m * m_factor(sys, k, true)?,
            };
        }
        Ok(())
    }

    fn entry_at(
        &self,
        sys: &SystemSpec,
        k: i64,
        green: Mat,
        prod: Products,
        kind: crate::linalg::NormKind,
    ) -> RowEntry {
        let g = operator_norm(&green, kind);
        let gamma = sys.f.gamma(k);
        let rho = sys.f.rho(k);
        // 0 · ∞ would poison the sums; a vanishing kernel kills the term.
        let weigh = |x: f64| if g == 0.0 || x == 0.0 { 0.0 } else { g * x };
        RowEntry {
            k,
            green_norm: g,
            mu: weigh(sys.f.mu(k)),
            gamma: weigh(gamma),
            first: weigh(gamma * prod.c),
            second: weigh(gamma * prod.m) + weigh(rho * prod.d),
            green,
        }
    }

    /// The entry at `k`, if the row covers it.
    pub fn entry(&self, k: i64) -> Option<&RowEntry> {
        if k < self.n {
            self.left.get((self.n - 1 - k) as usize)
        } else {
            self.right.get((k - self.n) as usize)
        }
    }

    /// Entries `k ∈ [n - K, n + K]` in increasing `k`.
    pub fn entries(&self, half_width: u32) -> impl Iterator<Item = &RowEntry> {
        let kw = half_width as usize;
        self.left[..kw.min(self.left.len())]
            .iter()
            .rev()
            .chain(self.right[..(kw + 1).min(self.right.len())].iter())
    }

    /// Fails when the envelope products are undefined somewhere in
    /// `[n - K, n)`.
    pub fn require_envelopes(&self, half_width: u32) -> Result<()> {
        match self.left_violation {
            Some((k, value)) if k >= self.n - half_width as i64 => Err(Error::ContractionViolation {
                condition: "gamma_k |A_k^-1| < 1",
                index: k,
                value,
            }),
            _ => Ok(()),
        }
    }

    /// `|𝒢(n, n+1)| γ_n`.
    pub fn center(&self) -> f64 {
        self.right.first().map_or(0.0, |e| e.first)
    }

    #[allow(clippy::too_many_arguments)]
    fn series(
        &self,
        sys: &SystemSpec,
        kind: SeriesKind,
        lo: i64,
        hi: i64,
        left_open: bool,
        right_open: bool,
        pick: impl Fn(&RowEntry) -> f64,
        cfg: &SeriesConfig,
    ) -> SeriesEstimate {
        let terms: Vec<f64> = (lo..=hi)
            .map(|k| pick(self.entry(k).expect("row covers the requested window")))
            .collect();
        let envelope = sys.envelopes.as_ref().and_then(|e| e.envelope(kind, self.n));
        estimate(
            &SeriesInput {
                lo,
                terms: &terms,
                left_open,
                right_open,
                envelope,
            },
            cfg,
        )
    }

    /// `Σ_k |𝒢(n,k+1)| μ_k` over the two-sided window.
    pub fn mu_series(&self, sys: &SystemSpec, half_width: u32, cfg: &SeriesConfig) -> SeriesEstimate {
        let kw = half_width as i64;
        self.series(sys, SeriesKind::Mu, self.n - kw, self.n + kw, true, true, |e| e.mu, cfg)
    }

    /// `Σ_k |𝒢(n,k+1)| γ_k` over the two-sided window.
    pub fn gamma_series(&self, sys: &SystemSpec, half_width: u32, cfg: &SeriesConfig) -> SeriesEstimate {
        let kw = half_width as i64;
        self.series(sys, SeriesKind::Gamma, self.n - kw, self.n + kw, true, true, |e| e.gamma, cfg)
    }

    /// `K_n`: the first-variable series over `k < n`.
    pub fn k_series(&self, sys: &SystemSpec, half_width: u32, cfg: &SeriesConfig) -> Result<SeriesEstimate> {
        self.require_envelopes(half_width)?;
        let kw = half_width.max(1) as i64;
        Ok(self.series(sys, SeriesKind::FirstVar, self.n - kw, self.n - 1, true, false, |e| e.first, cfg))
    }

    /// `J_n`: the first-variable series over `k > n`.
    pub fn j_series(&self, sys: &SystemSpec, half_width: u32, cfg: &SeriesConfig) -> Result<SeriesEstimate> {
        self.require_envelopes(half_width)?;
        let kw = half_width.max(1) as i64;
        Ok(self.series(sys, SeriesKind::FirstVar, self.n + 1, self.n + kw, false, true, |e| e.first, cfg))
    }

    /// The full first-variable series, centre term included.
    pub fn first_series(&self, sys: &SystemSpec, half_width: u32, cfg: &SeriesConfig) -> Result<SeriesEstimate> {
        self.require_envelopes(half_width)?;
        let kw = half_width as i64;
        Ok(self.series(sys, SeriesKind::FirstVar, self.n - kw, self.n + kw, true, true, |e| e.first, cfg))
    }

    /// The second-variable series `Σ_k |𝒢(n,k+1)|(γ_k M_{k,n} + ρ_k D_{k,n})`.
    pub fn second_series(&self, sys: &SystemSpec, half_width: u32, cfg: &SeriesConfig) -> Result<SeriesEstimate> {
        self.require_envelopes(half_width)?;
        let kw = half_width as i64;
        Ok(self.series(sys, SeriesKind::SecondVar, self.n - kw, self.n + kw, true, true, |e| e.second, cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{lip_c, lip_d, lip_m};
    use crate::examples::{build, ExampleParams, Variant};

    #[test]
    fn row_entries_match_direct_evaluation() {
        for variant in [Variant::Ex1, Variant::Ex2, Variant::EndCfg] {
            let p = ExampleParams::new(variant);
            let sys = build(&p).unwrap();
            let n = 3;
            let row = KernelRow::build(&sys, n, 6).unwrap();
            assert_eq!(row.half_width(), 6);
            for e in row.entries(6) {
                let g = sys.green(n, e.k + 1).unwrap();
                assert!((&e.green - &g).abs().max() < 1e-12, "{variant} k={}", e.k);
                let gn = sys.green_norm(n, e.k + 1).unwrap();
                let c = lip_c(&sys, e.k, n).unwrap();
                let m = lip_m(&sys, e.k, n).unwrap();
                let d = lip_d(&sys, e.k, n);
                let first = gn * sys.f.gamma(e.k) * c;
                let second = gn * (sys.f.gamma(e.k) * m + sys.f.rho(e.k) * d);
                assert!((e.first - first).abs() <= 1e-14 * (1.0 + first));
                assert!((e.second - second).abs() <= 1e-14 * (1.0 + second));
            }
        }
    }

    #[test]
    fn growing_preserves_existing_entries() {
        let sys = build(&ExampleParams::new(Variant::Ex1)).unwrap();
        let mut row = KernelRow::build(&sys, -2, 3).unwrap();
        let before: Vec<f64> = row.entries(3).map(|e| e.first).collect();
        row.grow(&sys, 9).unwrap();
        let after: Vec<f64> = row.entries(3).map(|e| e.first).collect();
        assert_eq!(before, after);
        assert_eq!(row.entries(9).count(), 19);
    }
}
