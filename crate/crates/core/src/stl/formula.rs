use serde::{Deserialize, Serialize};

use super::signal::Signal;
use crate::error::{Error, Result};

/// Scalar functional of one signal sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `a·x + offset`.
    Affine { coeffs: Vec<f64>, offset: f64 },
    /// `|x_i|`.
    AbsCoordinate { index: usize },
}

impl Functional {
    pub fn coordinate(dim: usize, index: usize) -> Self {
        let mut coeffs = vec![0.0; dim];
        coeffs[index] = 1.0;
        Functional::Affine { coeffs, offset: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Functional::Affine { coeffs, offset } => coeffs.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + offset,
            Functional::AbsCoordinate { index } => x[*index].abs(),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Functional::Affine { coeffs, .. } => coeffs.len() == dim,
            Functional::AbsCoordinate { index } => *index < dim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!("predicate {self:?} does not fit a {dim}-dimensional signal")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
            Comparison::Le => "<=",
            Comparison::Lt => "<",
        }
    }
}

/// `μ(x) ∼ b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub functional: Functional,
    pub comparison: Comparison,
    pub threshold: f64,
}

impl Predicate {
    pub fn new(functional: Functional, comparison: Comparison, threshold: f64) -> Self {
        Self {
            functional,
            comparison,
            threshold,
        }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        let v = self.functional.eval(x);
        match self.comparison {
            Comparison::Ge => v >= self.threshold,
            Comparison::Gt => v > self.threshold,
            Comparison::Le => v <= self.threshold,
            Comparison::Lt => v < self.threshold,
        }
    }

    /// Signed distance to the threshold, positive on the satisfying side.
    pub fn score(&self, x: &[f64]) -> f64 {
        let v = self.functional.eval(x);
        match self.comparison {
            Comparison::Ge | Comparison::Gt => v - self.threshold,
            Comparison::Le | Comparison::Lt => self.threshold - v,
        }
    }
}

/// Formula tree. Temporal windows are absolute: `Until` searches witnesses
/// in `[a, min(b, t)]` whatever node it sits under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecAst {
    True,
    Atom(Predicate),
    Not(Box<SpecAst>),
    And(Box<SpecAst>, Box<SpecAst>),
    Or(Box<SpecAst>, Box<SpecAst>),
    Until { lhs: Box<SpecAst>, rhs: Box<SpecAst>, a: f64, b: f64 },
}

impl SpecAst {
    pub fn atom(p: Predicate) -> Self {
        SpecAst::Atom(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        SpecAst::Not(Box::new(self))
    }

    pub fn and(self, other: Self) -> Self {
        SpecAst::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Self) -> Self {
        SpecAst::Or(Box::new(self), Box::new(other))
    }

    pub fn until(self, other: Self, a: f64, b: f64) -> Result<Self> {
        check_window(a, b)?;
        Ok(SpecAst::Until {
            lhs: Box::new(self),
            rhs: Box::new(other),
            a,
            b,
        })
    }

    /// `F[a,b] ψ = ⊤ U[a,b] ψ`.
    pub fn eventually(self, a: f64, b: f64) -> Result<Self> {
        SpecAst::True.until(self, a, b)
    }

    /// `G[a,b] ψ = ¬(⊤ U[a,b] ¬ψ)`.
    pub fn always(self, a: f64, b: f64) -> Result<Self> {
        Ok(SpecAst::True.until(self.not(), a, b)?.not())
    }

    pub fn depth(&self) -> usize {
        match self {
            SpecAst::True | SpecAst::Atom(_) => 0,
            SpecAst::Not(x) => 1 + x.depth(),
            SpecAst::And(l, r) | SpecAst::Or(l, r) | SpecAst::Until { lhs: l, rhs: r, .. } => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            SpecAst::True => Ok(()),
            SpecAst::Atom(p) => p.functional.check_dim(dim),
            SpecAst::Not(x) => x.validate(dim),
            SpecAst::And(l, r) | SpecAst::Or(l, r) => {
                l.validate(dim)?;
                r.validate(dim)
            }
            SpecAst::Until { lhs, rhs, a, b } => {
                check_window(*a, *b)?;
                lhs.validate(dim)?;
                rhs.validate(dim)
            }
        }
    }

    /// Boolean satisfaction at time `t`.
    pub fn satisfies(&self, s: &Signal, t: f64) -> Result<bool> {
        self.validate(s.dim())?;
        let k = s.index_at(t)?;
        Ok(self.truth_series(s)[k])
    }

    /// Unclamped robustness at time `t`; may be ±∞ (e.g. for `true`).
    pub fn raw_robustness(&self, s: &Signal, t: f64) -> Result<f64> {
        self.validate(s.dim())?;
        let k = s.index_at(t)?;
        Ok(self.robustness_series(s)[k])
    }

    /// Truth value at every sample index.
    pub fn truth_series(&self, s: &Signal) -> Vec<bool> {
        match self {
            SpecAst::True => vec![true; s.len()],
            SpecAst::Atom(p) => s.samples().map(|x| p.holds(x)).collect(),
            SpecAst::Not(x) => x.truth_series(s).into_iter().map(|v| !v).collect(),
            SpecAst::And(l, r) => zip_with(l.truth_series(s), r.truth_series(s), |a, b| a && b),
            SpecAst::Or(l, r) => zip_with(l.truth_series(s), r.truth_series(s), |a, b| a || b),
            SpecAst::Until { lhs, rhs, a, b } => {
                let hold = lhs.truth_series(s);
                let hit = rhs.truth_series(s);
                until_scan(s, *a, *b, false, |k, all_before| {
                    let all = all_before && hold[k];
                    (all, all && hit[k])
                }, true, |x, y| x || y)
            }
        }
    }

    /// Robustness at every sample index: atoms score signed distance,
    /// negation flips, conjunction/disjunction take min/max and `Until`
    /// takes the sup over witnesses of min(inner infimum, witness score).
    pub fn robustness_series(&self, s: &Signal) -> Vec<f64> {
        match self {
            SpecAst::True => vec![f64::INFINITY; s.len()],
            SpecAst::Atom(p) => s.samples().map(|x| p.score(x)).collect(),
            SpecAst::Not(x) => x.robustness_series(s).into_iter().map(|v| -v).collect(),
            SpecAst::And(l, r) => zip_with(l.robustness_series(s), r.robustness_series(s), f64::min),
            SpecAst::Or(l, r) => zip_with(l.robustness_series(s), r.robustness_series(s), f64::max),
            SpecAst::Until { lhs, rhs, a, b } => {
                let hold = lhs.robustness_series(s);
                let hit = rhs.robustness_series(s);
                until_scan(s, *a, *b, f64::NEG_INFINITY, |k, inf_before: f64| {
                    let inf = inf_before.min(hold[k]);
                    (inf, inf.min(hit[k]))
                }, f64::INFINITY, f64::max)
            }
        }
    }
}

fn check_window(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0 && a.is_finite() && a <= b) || b.is_nan() {
        return Err(Error::usage(format!("until window needs 0 <= a <= b, got [{a}, {b}]")));
    }
    Ok(())
}

fn zip_with<T: Copy>(l: Vec<T>, r: Vec<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    l.into_iter().zip(r).map(|(a, b)| f(a, b)).collect()
}

/// Shared scan for `Until`. Walking witnesses `t*` from the window start,
/// `step` folds the running "lhs held so far" state and returns the witness
/// value; the output at `t` is the `join` of witness values up to
/// `min(b, t)`, or `empty` when no witness exists yet.
fn until_scan<T: Copy>(
    s: &Signal,
    a: f64,
    b: f64,
    empty: T,
    mut step: impl FnMut(usize, T) -> (T, T),
    unit: T,
    join: impl Fn(T, T) -> T,
) -> Vec<T> {
    let n = s.len();
    let mut out = vec![empty; n];
    let Some((first, last)) = s.window(a, b) else {
        return out;
    };
    let mut state = unit;
    let mut best = empty;
    for k in first..n {
        if k <= last {
            let (next, witness) = step(k, state);
            state = next;
            best = join(best, witness);
        }
        out[k] = best;
    }
    out
}
