//! Exact Gaussian-process regression on a Cholesky factor of `K_n + λI`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Magnitude below which a negative posterior variance is treated as round-off.
pub const VARIANCE_CLAMP: f64 = 1e-12;

/// Sampled inputs `z_i` and their noisy observations `y_i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(points: Vec<Vec<f64>>, observations: Vec<f64>) -> Result<Self> {
        let data = Self {
            points,
            observations,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn push(&mut self, point: Vec<f64>, observation: f64) {
        self.points.push(point);
        self.observations.push(observation);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Input dimension, if any point has been recorded.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.observations.len() {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "{} points but {} observations",
                    self.points.len(),
                    self.observations.len()
                ),
            ));
        }
        if let Some(dim) = self.dim() {
            if dim == 0 {
                return Err(Error::invalid("dataset", "points must have dimension >= 1"));
            }
            if let Some(i) = self.points.iter().position(|p| p.len() != dim) {
                return Err(Error::invalid(
                    "dataset",
                    format!("point {i} has dimension {} (expected {dim})", self.points[i].len()),
                ));
            }
        }
        if let Some(i) = self.observations.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid("dataset", format!("observation {i} is not finite")));
        }
        Ok(())
    }
}

/// `λ` regularizes the Gram matrix; `v` is the noise scale in `ξ ~ N(0, λv²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    pub lambda: f64,
    pub v: f64,
}

impl RegressionParams {
    pub fn new(lambda: f64, v: f64) -> Result<Self> {
        let params = Self { lambda, v };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("params.lambda", format!("{} is not > 0", self.lambda)));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::invalid("params.v", format!("{} is not > 0", self.v)));
        }
        Ok(())
    }
}

impl Default for RegressionParams {
    fn default() -> Self {
        Self { lambda: 1.0, v: 1.0 }
    }
}

/// Fitted posterior. Immutable once built.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    dataset: Dataset,
    kernel: KernelSpec,
    params: RegressionParams,
    /// Lower Cholesky factor of `K_n + λI`; `None` for the empty dataset.
    factor: Option<DMatrix<f64>>,
    /// `(K_n + λI)^{-1} y`.
    weights: DVector<f64>,
}

/// Serialized form used to persist and resume a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: KernelSpec,
    pub params: RegressionParams,
    pub points: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
}

/// Gram matrix `K_n` of the kernel over `points`.
pub fn gram_matrix(kernel: &KernelSpec, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval_unchecked(&points[i], &points[j]);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    gram
}

fn cholesky_shifted(gram: &DMatrix<f64>, shift: f64) -> Option<DMatrix<f64>> {
    let n = gram.nrows();
    let shifted = gram + DMatrix::identity(n, n) * shift;
    nalgebra::Cholesky::new(shifted).map(|c| c.unpack())
}

/// `ln √det(shift·I + K)` from a fresh factorization.
pub fn log_sqrt_det_shifted(gram: &DMatrix<f64>, shift: f64) -> Result<f64> {
    if gram.nrows() == 0 {
        return Ok(0.0);
    }
    let factor = cholesky_shifted(gram, shift).ok_or(Error::NotPositiveDefinite { lambda: shift })?;
    Ok(factor.diagonal().iter().map(|d| d.ln()).sum())
}

impl GpPosterior {
    pub fn fit(dataset: Dataset, kernel: KernelSpec, params: RegressionParams) -> Result<Self> {
        dataset.validate()?;
        kernel.validate()?;
        params.validate()?;
        if dataset.is_empty() {
            return Ok(Self {
                dataset,
                kernel,
                params,
                factor: None,
                weights: DVector::zeros(0),
            });
        }
        let gram = gram_matrix(&kernel, &dataset.points);
        let factor = cholesky_shifted(&gram, params.lambda)
            .ok_or(Error::NotPositiveDefinite { lambda: params.lambda })?;
        let y = DVector::from_column_slice(&dataset.observations);
        let mut weights = y;
        factor.solve_lower_triangular_mut(&mut weights);
        factor.tr_solve_lower_triangular_mut(&mut weights);
        Ok(Self {
            dataset,
            kernel,
            params,
            factor: Some(factor),
            weights,
        })
    }

    pub fn from_snapshot(snapshot: GpSnapshot) -> Result<Self> {
        let dataset = Dataset::from_parts(snapshot.points, snapshot.observations)?;
        Self::fit(dataset, snapshot.kernel, snapshot.params)
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            kernel: self.kernel,
            params: self.params,
            points: self.dataset.points.clone(),
            observations: self.dataset.observations.clone(),
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn params(&self) -> &RegressionParams {
        &self.params
    }

    /// Lower Cholesky factor of `K_n + λI`.
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        gram_matrix(&self.kernel, &self.dataset.points)
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        match self.dataset.dim() {
            Some(dim) if dim != z.len() => Err(Error::usage(format!(
                "query has dimension {} but the posterior was fit in dimension {dim}",
                z.len()
            ))),
            _ => Ok(()),
        }
    }

    fn cross_covariance(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dataset.len(),
            self.dataset.points.iter().map(|p| self.kernel.eval_unchecked(z, p)),
        )
    }

    /// μ_n(z).
    pub fn mean(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        if self.factor.is_none() {
            return Ok(0.0);
        }
        Ok(self.cross_covariance(z).dot(&self.weights))
    }

    /// k_n(z, z), clamped at zero when round-off pushes it slightly negative.
    pub fn variance(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.predict_unchecked(z)?.1)
    }

    /// (μ_n(z), k_n(z, z)) sharing one cross-covariance evaluation.
    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(z)?;
        self.predict_unchecked(z)
    }

    pub(crate) fn predict_unchecked(&self, z: &[f64]) -> Result<(f64, f64)> {
        let prior = self.kernel.signal_variance;
        let Some(factor) = &self.factor else {
            return Ok((0.0, prior));
        };
        let mut v = self.cross_covariance(z);
        let mean = v.dot(&self.weights);
        factor.solve_lower_triangular_mut(&mut v);
        let var = prior - v.norm_squared();
        if var >= 0.0 {
            Ok((mean, var))
        } else if -var < VARIANCE_CLAMP * prior.max(1.0) {
            Ok((mean, 0.0))
        } else {
            Err(Error::NegativeVariance {
                value: var,
                point: z.to_vec(),
            })
        }
    }

    /// `ln √det((1+η)I + K_n)`, the determinant term of the confidence width.
    pub fn log_det_shifted(&self, eta: f64) -> Result<f64> {
        if !(eta > 0.0) {
            return Err(Error::usage(format!("eta must be > 0, got {eta}")));
        }
        log_sqrt_det_shifted(&self.gram(), 1.0 + eta)
    }
}
