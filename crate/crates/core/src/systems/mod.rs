//! Closed-loop system interface, the Segway benchmark and the sampled
//! objectives built on top of rollouts.

mod segway;

pub use segway::{write_trajectory_csv, SegwayGains, SegwayModel, SegwayParams, Twin, PHI, SEGWAY_COORDINATES};

use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::stl::{seminorm_diff, RobustnessMeasure, SeminormSpec, Signal, SignalSchema};

/// A closed-loop system mapping phenomena `d` and a noise seed to a
/// trajectory over `[0, horizon]`. Identical `(d, seed)` must give
/// bitwise-identical signals.
pub trait SystemModel: Send + Sync {
    fn schema(&self) -> SignalSchema;
    fn dt(&self) -> f64;
    fn horizon(&self) -> f64;
    /// Admissible phenomena.
    fn domain(&self) -> &Domain;
    fn simulate(&self, d: &[f64], seed: u64) -> Result<Signal>;
}

/// Robustness of one nominal rollout at time `t`.
pub fn sample_rho_hat(nominal: &dyn SystemModel, measure: &RobustnessMeasure, d: &[f64], t: f64, seed: u64) -> Result<f64> {
    let s = nominal.simulate(d, seed)?;
    measure.robustness(&s, t)
}

/// Seminorm distance between one nominal and one true rollout drawn with
/// independent seeds `(nominal, true)`.
pub fn sample_gap(
    nominal: &dyn SystemModel,
    truesys: &dyn SystemModel,
    spec: &SeminormSpec,
    d: &[f64],
    seeds: (u64, u64),
) -> Result<f64> {
    if nominal.schema().dim() != truesys.schema().dim()
        || nominal.dt() != truesys.dt()
        || nominal.horizon() != truesys.horizon()
    {
        return Err(Error::usage("nominal and true systems differ in dimension, step or horizon"));
    }
    let s_hat = nominal.simulate(d, seeds.0)?;
    let s = truesys.simulate(d, seeds.1)?;
    seminorm_diff(spec, &s, &s_hat)
}

/// Plug-in estimate of `E[ρ] − r·sqrt(Var ρ)` from `n_rollouts` true rollouts
/// scored at the system horizon, with the unbiased sample deviation.
pub fn sample_risk_objective(
    truesys: &dyn SystemModel,
    measure: &RobustnessMeasure,
    d: &[f64],
    r: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<f64> {
    if n_rollouts < 2 {
        return Err(Error::usage(format!("risk objective needs at least 2 rollouts, got {n_rollouts}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::usage(format!("risk weight must be >= 0, got {r}")));
    }
    let t = truesys.horizon();
    let values = (0..n_rollouts)
        .into_par_iter()
        .map(|j| {
            let s = truesys.simulate(d, derive_seed(seed, j as u64))?;
            measure.robustness(&s, t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(if r == 0.0 { mean } else { mean - r * var.sqrt() })
}

/// `sin(z₁) cos(z₂) / 2`.
pub fn test_function(z: &[f64]) -> f64 {
    z[0].sin() * z[1].cos() / 2.0
}

/// Noisy sample of [`test_function`] on `[0, 5]²`.
pub fn test_function_system(z: &[f64], noise_sigma: f64, seed: u64) -> Result<f64> {
    if z.len() != 2 || !z.iter().all(|v| (0.0..=5.0).contains(v)) {
        return Err(Error::usage(format!("test function takes a point of [0, 5]^2, got {z:?}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::usage(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: f64 = StandardNormal.sample(&mut rng);
    Ok(test_function(z) + noise_sigma * xi)
}

#[cfg(test)]
mod tests;
