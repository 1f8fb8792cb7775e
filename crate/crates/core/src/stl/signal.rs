use crate::error::{Error, Result};

/// Uniformly sampled trajectory; sample `k` sits at time `k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

/// Slack used when mapping real times onto sample indices.
const TIME_SLACK: f64 = 1e-9;

impl Signal {
    pub fn new(dt: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map(Vec::len).unwrap_or(0);
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("signal", "samples have differing dimensions"));
        }
        Self::from_flat(dt, dim, values.into_iter().flatten().collect())
    }

    /// Row-major samples, `dim` values per time step.
    pub fn from_flat(dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("signal", format!("dt must be positive, got {dt}")));
        }
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::invalid("signal", "need at least one sample of positive dimension"));
        }
        Ok(Self { dt, dim, data })
    }

    /// Scalar signal.
    pub fn scalar(dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(dt, 1, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Coordinate `i` as a series.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples().map(|v| v[i]).collect()
    }

    /// Last sample index at or before `t`; errors when `t` lies outside the signal.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.duration() + TIME_SLACK * self.dt.max(1.0) {
            return Err(Error::usage(format!("time {t} outside signal span [0, {}]", self.duration())));
        }
        Ok(((t / self.dt + TIME_SLACK).floor() as usize).min(self.len() - 1))
    }

    /// Sample indices `[first, last]` covered by the window `[a, b]`; `b` may be infinite.
    /// `None` when the window holds no sample.
    pub(crate) fn window(&self, a: f64, b: f64) -> Option<(usize, usize)> {
        let first = (a / self.dt - TIME_SLACK).ceil().max(0.0);
        if first >= self.len() as f64 {
            return None;
        }
        let last = if b.is_infinite() {
            self.len() - 1
        } else {
            ((b / self.dt + TIME_SLACK).floor() as usize).min(self.len() - 1)
        };
        let first = first as usize;
        (first <= last).then_some((first, last))
    }
}
