use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact axis-aligned box `[lower, upper]` in ℝ^l.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(
                "domain",
                format!("bounds have dimensions {} and {}", lower.len(), upper.len()),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid("domain", format!("axis {i}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
            .collect()
    }

    /// Evenly spaced grid with `per_dim` nodes per axis, endpoints included,
    /// in lexicographic order (first axis varies slowest). One node per axis
    /// means the midpoint.
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|d| self.axis_nodes(d, per_dim)).collect();
        let total = axes.iter().map(Vec::len).product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        for _ in 0..total {
            out.push(idx.iter().enumerate().map(|(d, &k)| axes[d][k]).collect());
            for d in (0..self.dim()).rev() {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }

    pub fn axis_nodes(&self, axis: usize, per_dim: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        if per_dim <= 1 {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (per_dim - 1) as f64;
        (0..per_dim)
            .map(|k| if k + 1 == per_dim { hi } else { lo + step * k as f64 })
            .collect()
    }

    pub fn clamp(&self, z: &mut [f64]) {
        for ((x, lo), hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*lo, *hi);
        }
    }
}
