//! Inner maximizer of the UCB surface `μ(z) + β σ(z)`.
//!
//! A deterministic grid seeds the search; the best `restarts` grid nodes are
//! then polished by coordinate-wise golden-section sweeps, each sweep halving
//! the bracket. Grid values are computed in parallel and reduced in index
//! order, so the result does not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::gp::GpPosterior;

const GOLDEN_ITERS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcqBudget {
    pub grid_points_per_dim: usize,
    pub restarts: usize,
    pub refine_steps: usize,
}

impl AcqBudget {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_dim == 0 || self.restarts == 0 || self.refine_steps == 0 {
            return Err(Error::invalid("acquisition", format!("all budget entries must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

impl Default for AcqBudget {
    fn default() -> Self {
        Self {
            grid_points_per_dim: 31,
            restarts: 3,
            refine_steps: 4,
        }
    }
}

/// UCB value; the confidence width is the posterior variance `k_n(z, z)`.
pub fn ucb(gp: &GpPosterior, beta: f64, z: &[f64]) -> Result<f64> {
    let (mean, var) = gp.predict(z)?;
    Ok(mean + beta * var)
}

fn ucb_unchecked(gp: &GpPosterior, beta: f64, z: &[f64]) -> Result<f64> {
    let (mean, var) = gp.predict_unchecked(z)?;
    Ok(mean + beta * var)
}

/// Point of the domain with the largest UCB found within `budget`. Its value
/// is never below that of any grid node; ties go to the lowest grid index.
pub fn maximize_ucb(gp: &GpPosterior, beta: f64, domain: &Domain, budget: &AcqBudget) -> Result<Vec<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::usage(format!("beta must be >= 0, got {beta}")));
    }
    budget.validate()?;
    if let Some(dim) = gp.dataset().dim() {
        if dim != domain.dim() {
            return Err(Error::usage(format!("posterior dimension {dim} != domain dimension {}", domain.dim())));
        }
    }
    let grid = domain.grid(budget.grid_points_per_dim);
    let values = grid
        .par_iter()
        .map(|z| ucb_unchecked(gp, beta, z))
        .collect::<Result<Vec<f64>>>()?;

    let mut order: Vec<usize> = (0..grid.len()).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let spacing: Vec<f64> = (0..domain.dim())
        .map(|d| {
            let width = domain.upper()[d] - domain.lower()[d];
            if budget.grid_points_per_dim > 1 {
                width / (budget.grid_points_per_dim - 1) as f64
            } else {
                0.5 * width
            }
        })
        .collect();

    let mut best = grid[order[0]].clone();
    let mut best_value = values[order[0]];
    for &start in order.iter().take(budget.restarts) {
        let (z, v) = refine(gp, beta, domain, &grid[start], values[start], &spacing, budget.refine_steps)?;
        if v > best_value {
            best = z;
            best_value = v;
        }
    }
    Ok(best)
}

fn refine(
    gp: &GpPosterior,
    beta: f64,
    domain: &Domain,
    start: &[f64],
    start_value: f64,
    spacing: &[f64],
    sweeps: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut z = start.to_vec();
    let mut value = start_value;
    let mut half_width: Vec<f64> = spacing.to_vec();
    for _ in 0..sweeps {
        for axis in 0..z.len() {
            let lo = (z[axis] - half_width[axis]).max(domain.lower()[axis]);
            let hi = (z[axis] + half_width[axis]).min(domain.upper()[axis]);
            let (x, v) = golden_section_max(lo, hi, |x| {
                let mut probe = z.clone();
                probe[axis] = x;
                ucb_unchecked(gp, beta, &probe)
            })?;
            if v > value {
                z[axis] = x;
                value = v;
            }
        }
        for h in &mut half_width {
            *h *= 0.5;
        }
    }
    Ok((z, value))
}

fn golden_section_max<F>(mut lo: f64, mut hi: f64, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERS {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}
