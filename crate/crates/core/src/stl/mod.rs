//! Signal temporal logic: formulas, boolean and quantitative semantics,
//! clamped robustness measures and trajectory seminorms.

mod formula;
mod measure;
mod parse;
mod signal;

pub use formula::{Comparison, Functional, Predicate, SpecAst};
pub use measure::{seminorm_diff, RobustnessMeasure, SeminormKind, SeminormSpec};
pub use parse::{parse_spec, print_spec, SignalSchema};
pub use signal::Signal;
