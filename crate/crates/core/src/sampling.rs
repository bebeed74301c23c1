// SPDX-License-Identifier: Apache-2.0

//! Seeded random probes and jittered probe lattices.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

pub type ProbeRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ProbeRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point of `[-radius, radius]^dim`.
pub fn random_vector(rng: &mut ProbeRng, dim: usize, radius: f64) -> Vector {
    Vector::from_fn(dim, |_, _| rng.random_range(-radius..=radius))
}

/// A lattice of `count` points per axis over `[-extent, extent]`, each point
/// moved by a seeded jitter of at most `jitter` times the lattice spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub extent: f64,
    pub count: usize,
    pub jitter: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            extent: 1.0,
            count: 5,
            jitter: 0.1,
        }
    }
}

impl GridSpec {
    pub fn len(&self, dim: usize) -> usize {
        self.count.pow(dim as u32)
    }

    pub fn is_empty(&self, dim: usize) -> bool {
        self.len(dim) == 0
    }

    pub fn points(&self, dim: usize, seed: u64) -> Vec<Vector> {
        let axis: Vec<f64> = if self.count == 1 {
            vec![0.0]
        } else {
            (0..self.count)
                .map(|i| -self.extent + 2.0 * self.extent * i as f64 / (self.count - 1) as f64)
                .collect()
        };
        let spacing = if self.count > 1 {
            2.0 * self.extent / (self.count - 1) as f64
        } else {
            self.extent
        };
        let amp = 0.5 * self.jitter * spacing;
        let mut r = rng(seed);
        let total = self.len(dim);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let p = Vector::from_fn(dim, |_, _| {
                let c = axis[rem % self.count];
                rem /= self.count;
                let shift = if amp > 0.0 {
                    r.random_range(-amp..=amp)
                } else {
                    0.0
                };
                c + shift
            });
            out.push(p);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_deterministic_and_sized() {
        let g = GridSpec::default();
        let a = g.points(3, 7);
        let b = g.points(3, 7);
        assert_eq!(a.len(), 125);
        assert_eq!(a, b);
        assert_ne!(a, g.points(3, 8));
        for p in &a {
            assert!(p.iter().all(|v| v.abs() <= 1.0 + 0.05 * 0.5 + 1e-12));
        }
    }

    #[test]
    fn unjittered_grid_hits_lattice() {
        let g = GridSpec {
            extent: 1.0,
            count: 3,
            jitter: 0.0,
        };
        let pts = g.points(1, 0);
        let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
    }
}
