use serde::{Deserialize, Serialize};

use super::formula::SpecAst;
use super::signal::Signal;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeminormKind {
    /// `max_{t' ≤ t} max_i |s_i(t') − z_i(t')|` over the listed coordinates.
    CoordinateSup { coordinates: Vec<usize> },
    /// `max_{t' ≤ t} ‖s(t') − z(t')‖₂`.
    EuclideanSup,
}

/// Trajectory seminorm `‖s − z‖_t` over `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormSpec {
    pub kind: SeminormKind,
    pub horizon: f64,
}

impl SeminormSpec {
    pub fn coordinate_sup(coordinates: Vec<usize>, horizon: f64) -> Result<Self> {
        let spec = Self {
            kind: SeminormKind::CoordinateSup { coordinates },
            horizon,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn euclidean_sup(horizon: f64) -> Result<Self> {
        let spec = Self {
            kind: SeminormKind::EuclideanSup,
            horizon,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("seminorm", format!("horizon must be positive, got {}", self.horizon)));
        }
        if let SeminormKind::CoordinateSup { coordinates } = &self.kind {
            if coordinates.is_empty() {
                return Err(Error::invalid("seminorm", "no coordinates selected"));
            }
            if let Some(dim) = dim {
                if let Some(bad) = coordinates.iter().find(|&&c| c >= dim) {
                    return Err(Error::invalid("seminorm", format!("coordinate {bad} >= signal dimension {dim}")));
                }
            }
        }
        Ok(())
    }
}

/// `‖s − z‖_horizon`.
pub fn seminorm_diff(spec: &SeminormSpec, s: &Signal, z: &Signal) -> Result<f64> {
    if s.dim() != z.dim() {
        return Err(Error::usage(format!("signal dimensions differ: {} vs {}", s.dim(), z.dim())));
    }
    if (s.dt() - z.dt()).abs() > 1e-12 * s.dt() {
        return Err(Error::usage(format!("sampling steps differ: {} vs {}", s.dt(), z.dt())));
    }
    spec.validate(Some(s.dim()))?;
    let last = s.index_at(spec.horizon).and(z.index_at(spec.horizon))?;
    let mut worst = 0.0f64;
    for k in 0..=last {
        let (a, b) = (s.sample(k), z.sample(k));
        let d = match &spec.kind {
            SeminormKind::CoordinateSup { coordinates } => {
                coordinates.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
            }
            SeminormKind::EuclideanSup => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Robustness functional with its clamp range `[−m, M]`, Lipschitz constant
/// and the seminorm that constant refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessMeasure {
    pub spec: SpecAst,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    pub lipschitz: f64,
    pub seminorm: SeminormSpec,
}

impl RobustnessMeasure {
    pub fn new(spec: SpecAst, clamp_lo: f64, clamp_hi: f64, lipschitz: f64, seminorm: SeminormSpec) -> Result<Self> {
        let m = Self {
            spec,
            clamp_lo,
            clamp_hi,
            lipschitz,
            seminorm,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_lo < 0.0 && self.clamp_hi > 0.0 && self.clamp_lo.is_finite() && self.clamp_hi.is_finite()) {
            return Err(Error::invalid(
                "measure",
                format!("clamp range must straddle zero, got [{}, {}]", self.clamp_lo, self.clamp_hi),
            ));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::invalid("measure", format!("lipschitz constant must be positive, got {}", self.lipschitz)));
        }
        self.seminorm.validate(None)
    }

    /// `m` in the `[−m, M]` range.
    pub fn lower_magnitude(&self) -> f64 {
        -self.clamp_lo
    }

    /// `M` in the `[−m, M]` range.
    pub fn upper_magnitude(&self) -> f64 {
        self.clamp_hi
    }

    pub fn clamp(&self, raw: f64) -> f64 {
        raw.clamp(self.clamp_lo, self.clamp_hi)
    }

    /// Clamped robustness at `t`; zero counts as satisfying.
    pub fn robustness(&self, s: &Signal, t: f64) -> Result<f64> {
        self.seminorm.validate(Some(s.dim()))?;
        Ok(self.clamp(self.spec.raw_robustness(s, t)?))
    }

    pub fn satisfies(&self, s: &Signal, t: f64) -> Result<bool> {
        self.spec.satisfies(s, t)
    }
}
