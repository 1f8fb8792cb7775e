//! Lower bound on the true-system risk measure from simulator-side searches.
//!
//! The nominal robustness minimum is bounded below (`ρ̃`), the worst expected
//! sim-to-real gap is bounded above (`ẽ`), and the two combine into
//! `ℓ = ρ̃ − L·ẽ − r(M+m)/2` with probability at least `Δ₁·Δ₂`. The direct
//! path bounds the risk measure by searching the true system itself.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bound::{run_lower_bound, run_upper_bound, BoundConfig, BoundResult};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::journal::Journal;
use crate::kernel::KernelSpec;
use crate::seeding::derive_seed;
use crate::stl::{Comparison, Functional, Predicate, RobustnessMeasure, SeminormSpec, SignalSchema, SpecAst};
use crate::systems::{
    sample_gap, sample_rho_hat, sample_risk_objective, SegwayModel, SegwayParams, SystemModel, PHI, SEGWAY_COORDINATES,
};

#[derive(Clone)]
pub struct VerificationProblem {
    pub measure: RobustnessMeasure,
    pub nominal: Arc<dyn SystemModel>,
    pub truesys: Arc<dyn SystemModel>,
    pub domain: Domain,
    /// Evaluation time `T`.
    pub horizon: f64,
    /// Weight `r` on the standard deviation in the risk measure.
    pub risk_weight: f64,
    pub kernel: KernelSpec,
    pub rho_config: BoundConfig,
    pub gap_config: BoundConfig,
}

impl VerificationProblem {
    pub fn validate(&self) -> Result<()> {
        self.measure.validate()?;
        self.kernel.validate()?;
        self.rho_config.validate()?;
        self.gap_config.validate()?;
        if !(self.risk_weight >= 0.0 && self.risk_weight.is_finite()) {
            return Err(Error::invalid("risk_weight", format!("must be >= 0, got {}", self.risk_weight)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        for (name, sys) in [("nominal", &self.nominal), ("true", &self.truesys)] {
            if sys.horizon() + 1e-9 < self.horizon {
                return Err(Error::invalid(
                    "horizon",
                    format!("{name} system stops at {} before the evaluation time {}", sys.horizon(), self.horizon),
                ));
            }
            if sys.schema().dim() != self.nominal.schema().dim() {
                return Err(Error::invalid("systems", "nominal and true systems emit different dimensions"));
            }
        }
        if self.measure.seminorm.horizon > self.horizon + 1e-9 {
            return Err(Error::invalid("seminorm", "seminorm horizon exceeds the evaluation time"));
        }
        if self.domain.dim() != self.nominal.domain().dim() {
            return Err(Error::invalid("domain", "search domain does not match the systems' phenomena"));
        }
        Ok(())
    }

    /// `r(M+m)/2` for this problem's clamp range.
    pub fn popoviciu_term(&self) -> f64 {
        popoviciu_term(self.risk_weight, self.measure.lower_magnitude(), self.measure.upper_magnitude())
    }
}

/// Upright-pendulum benchmark: `G[0,∞) |φ| ≤ tilt_limit` clamped to
/// `[−m, M]`, 1-Lipschitz in the sup-norm of the tilt coordinate.
pub struct SegwayProblemSpec {
    pub params: SegwayParams,
    pub domain: Domain,
    pub tilt_limit: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    pub risk_weight: f64,
    pub kernel: KernelSpec,
    pub rho_config: BoundConfig,
    pub gap_config: BoundConfig,
}

impl SegwayProblemSpec {
    pub fn build(self) -> Result<VerificationProblem> {
        let horizon = self.params.horizon;
        let schema = SignalSchema::new(SEGWAY_COORDINATES)?;
        let spec = SpecAst::Atom(Predicate::new(Functional::AbsCoordinate { index: PHI }, Comparison::Le, self.tilt_limit))
            .always(0.0, f64::INFINITY)?;
        spec.validate(schema.dim())?;
        let measure = RobustnessMeasure::new(
            spec,
            self.clamp_lo,
            self.clamp_hi,
            1.0,
            SeminormSpec::coordinate_sup(vec![PHI], horizon)?,
        )?;
        let problem = VerificationProblem {
            measure,
            nominal: Arc::new(SegwayModel::nominal(self.params.clone(), self.domain.clone())?),
            truesys: Arc::new(SegwayModel::true_twin(self.params, self.domain.clone())?),
            domain: self.domain,
            horizon,
            risk_weight: self.risk_weight,
            kernel: self.kernel,
            rho_config: self.rho_config,
            gap_config: self.gap_config,
        };
        problem.validate()?;
        Ok(problem)
    }
}

/// `r(M+m)/2`: the largest possible `r·std` of a variable confined to `[−m, M]`.
pub fn popoviciu_term(r: f64, m: f64, big_m: f64) -> f64 {
    r * (big_m + m) / 2.0
}

/// The numbers of a composed certificate `P[ρ* ≥ ℓ] ≥ probability`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub rho_tilde: f64,
    pub e_tilde: f64,
    pub lipschitz: f64,
    pub popoviciu_term: f64,
    pub ell: f64,
    pub probability: f64,
    pub delta_factors: [f64; 2],
}

impl Certificate {
    pub fn compose(rho_tilde: f64, e_tilde: f64, lipschitz: f64, popoviciu_term: f64, delta_factors: [f64; 2]) -> Self {
        Self {
            rho_tilde,
            e_tilde,
            lipschitz,
            popoviciu_term,
            ell: rho_tilde - lipschitz * e_tilde - popoviciu_term,
            probability: delta_factors[0] * delta_factors[1],
            delta_factors,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBound {
    pub certificate: Certificate,
    pub rho_result: BoundResult,
    pub gap_result: BoundResult,
    /// True-twin rollouts spent (gap search only).
    pub true_system_evals: usize,
}

impl RiskBound {
    pub fn ell(&self) -> f64 {
        self.certificate.ell
    }

    pub fn probability(&self) -> f64 {
        self.certificate.probability
    }
}

fn campaign_name(prefix: Option<&str>, name: &str) -> String {
    match prefix {
        Some(p) => format!("{p}/{name}"),
        None => name.to_string(),
    }
}

fn journaled(
    journal: Option<&Journal>,
    campaign: &str,
    index: usize,
    z: &[f64],
    seed: u64,
    compute: impl FnOnce() -> Result<f64>,
) -> Result<f64> {
    match journal {
        Some(j) => j.record(campaign, index, z, seed, compute),
        None => compute(),
    }
}

/// Lower bound `ρ̃` on the minimum of the nominal robustness, one nominal
/// rollout per evaluation.
pub fn bound_nominal_robustness(problem: &VerificationProblem) -> Result<BoundResult> {
    bound_nominal_robustness_logged(problem, None, None)
}

pub fn bound_nominal_robustness_logged(
    problem: &VerificationProblem,
    journal: Option<&Journal>,
    prefix: Option<&str>,
) -> Result<BoundResult> {
    let campaign = campaign_name(prefix, "rho");
    let cfg = &problem.rho_config;
    let mut objective = |z: &[f64], k: usize| {
        let seed = derive_seed(cfg.seed, k as u64);
        journaled(journal, &campaign, k, z, seed, || {
            sample_rho_hat(problem.nominal.as_ref(), &problem.measure, z, problem.horizon, seed)
        })
    };
    run_lower_bound(&mut objective, &problem.domain, cfg, &problem.kernel)
}

/// Upper bound `ẽ` on the maximum expected gap, one nominal and one true
/// rollout (independent seeds) per evaluation.
pub fn bound_sim_gap(problem: &VerificationProblem) -> Result<BoundResult> {
    bound_sim_gap_logged(problem, None, None)
}

pub fn bound_sim_gap_logged(
    problem: &VerificationProblem,
    journal: Option<&Journal>,
    prefix: Option<&str>,
) -> Result<BoundResult> {
    let campaign = campaign_name(prefix, "gap");
    let cfg = &problem.gap_config;
    let mut objective = |z: &[f64], k: usize| {
        let seed = derive_seed(cfg.seed, k as u64);
        let seeds = (derive_seed(seed, 0), derive_seed(seed, 1));
        journaled(journal, &campaign, k, z, seed, || {
            sample_gap(problem.nominal.as_ref(), problem.truesys.as_ref(), &problem.measure.seminorm, z, seeds)
        })
    };
    run_upper_bound(&mut objective, &problem.domain, cfg, &problem.kernel)
}

/// Combines the two searches; refuses unless both terminated.
pub fn compose_risk_bound(problem: &VerificationProblem, rho_result: BoundResult, gap_result: BoundResult) -> Result<RiskBound> {
    let rho_tilde = rho_result.bound.filter(|_| rho_result.terminated).ok_or_else(|| {
        Error::Composition(format!(
            "nominal robustness search stopped at iteration {} without reaching F <= alpha",
            rho_result.terminal_iter
        ))
    })?;
    let e_tilde = gap_result.bound.filter(|_| gap_result.terminated).ok_or_else(|| {
        Error::Composition(format!(
            "gap search stopped at iteration {} without reaching F <= alpha",
            gap_result.terminal_iter
        ))
    })?;
    let certificate = Certificate::compose(
        rho_tilde,
        e_tilde,
        problem.measure.lipschitz,
        problem.popoviciu_term(),
        [rho_result.probability, gap_result.probability],
    );
    let true_system_evals = gap_result.total_evaluations();
    Ok(RiskBound {
        certificate,
        rho_result,
        gap_result,
        true_system_evals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectBound {
    /// Lower bound on the risk measure; `None` when the search did not terminate.
    pub bound: Option<f64>,
    pub probability: f64,
    pub n_rollouts: usize,
    pub result: BoundResult,
    pub true_system_evals: usize,
}

/// Lower bound on the risk measure by searching the true system directly,
/// each evaluation estimating mean and spread from `n_rollouts` rollouts.
pub fn direct_risk_bound(problem: &VerificationProblem, config: &BoundConfig, n_rollouts: usize) -> Result<DirectBound> {
    direct_risk_bound_logged(problem, config, n_rollouts, None, None)
}

pub fn direct_risk_bound_logged(
    problem: &VerificationProblem,
    config: &BoundConfig,
    n_rollouts: usize,
    journal: Option<&Journal>,
    prefix: Option<&str>,
) -> Result<DirectBound> {
    if n_rollouts < 2 {
        return Err(Error::usage(format!("direct path needs at least 2 rollouts per evaluation, got {n_rollouts}")));
    }
    let campaign = campaign_name(prefix, "direct");
    let mut objective = |z: &[f64], k: usize| {
        let seed = derive_seed(config.seed, k as u64);
        journaled(journal, &campaign, k, z, seed, || {
            sample_risk_objective(problem.truesys.as_ref(), &problem.measure, z, problem.risk_weight, n_rollouts, seed)
        })
    };
    let result = run_lower_bound(&mut objective, &problem.domain, config, &problem.kernel)?;
    Ok(DirectBound {
        bound: result.bound,
        probability: result.probability,
        n_rollouts,
        true_system_evals: result.total_evaluations() * n_rollouts,
        result,
    })
}

#[derive(Clone, Debug, Default)]
pub struct CampaignOptions {
    /// Direct-path search settings and rollouts per evaluation.
    pub direct: Option<(BoundConfig, usize)>,
    /// Run the two simulator-side searches on separate threads.
    pub concurrent: bool,
    /// Journal label for this campaign, distinguishing repeats.
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub rho_result: BoundResult,
    pub gap_result: BoundResult,
    /// `None` when either simulator-side search failed to terminate.
    pub simulator_path: Option<Certificate>,
    pub simulator_true_evals: usize,
    pub lipschitz: f64,
    pub popoviciu_term: f64,
    pub direct_path: Option<DirectBound>,
}

impl CampaignReport {
    pub fn complete(&self) -> bool {
        self.simulator_path.is_some() && self.direct_path.as_ref().map_or(true, |d| d.result.terminated)
    }

    /// Direct-path rollouts minus simulator-path rollouts.
    pub fn eval_savings(&self) -> Option<i64> {
        self.direct_path
            .as_ref()
            .map(|d| d.true_system_evals as i64 - self.simulator_true_evals as i64)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cert = self.simulator_path.as_ref();
        let direct = self.direct_path.as_ref();
        json!({
            "complete": self.complete(),
            "rho_tilde": self.rho_result.bound,
            "e_tilde": self.gap_result.bound,
            "L": self.lipschitz,
            "popoviciu_term": self.popoviciu_term,
            "ell": cert.map(|c| c.ell),
            "probability": cert.map(|c| c.probability),
            "delta_factors": [self.rho_result.probability, self.gap_result.probability],
            "iterations": {
                "rho": self.rho_result.terminal_iter,
                "gap": self.gap_result.terminal_iter,
                "direct": direct.map(|d| d.result.terminal_iter),
            },
            "terminated": {
                "rho": self.rho_result.terminated,
                "gap": self.gap_result.terminated,
                "direct": direct.map(|d| d.result.terminated),
            },
            "true_system_evals": {
                "simulator_path": self.simulator_true_evals,
                "direct_path": direct.map(|d| d.true_system_evals),
            },
            "direct": direct.map(|d| json!({
                "bound": d.bound,
                "probability": d.probability,
                "n_rollouts": d.n_rollouts,
            })),
            "eval_savings": self.eval_savings(),
        })
    }

    /// `result.json` plus one `trace.csv` per search under `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("result.json"), serde_json::to_string_pretty(&self.to_json())? + "\n")?;
        let mut traces = vec![("rho", &self.rho_result), ("gap", &self.gap_result)];
        if let Some(d) = &self.direct_path {
            traces.push(("direct", &d.result));
        }
        for (name, result) in traces {
            let sub = dir.join(name);
            fs::create_dir_all(&sub)?;
            result.write_trace_csv(fs::File::create(sub.join("trace.csv"))?)?;
        }
        Ok(())
    }
}

/// Nominal robustness search, gap search, composition and optionally the
/// direct comparison. Non-terminated searches leave the certificate empty.
pub fn run_campaign(problem: &VerificationProblem, options: &CampaignOptions, journal: Option<&Journal>) -> Result<CampaignReport> {
    problem.validate()?;
    let prefix = options.label.as_deref();
    let (rho, gap) = if options.concurrent {
        rayon::join(
            || bound_nominal_robustness_logged(problem, journal, prefix),
            || bound_sim_gap_logged(problem, journal, prefix),
        )
    } else {
        (
            bound_nominal_robustness_logged(problem, journal, prefix),
            bound_sim_gap_logged(problem, journal, prefix),
        )
    };
    let (rho, gap) = (rho?, gap?);
    let simulator_path = match compose_risk_bound(problem, rho.clone(), gap.clone()) {
        Ok(b) => Some(b.certificate),
        Err(Error::Composition(_)) => None,
        Err(e) => return Err(e),
    };
    let direct_path = match &options.direct {
        Some((cfg, n)) => Some(direct_risk_bound_logged(problem, cfg, *n, journal, prefix)?),
        None => None,
    };
    Ok(CampaignReport {
        simulator_true_evals: gap.total_evaluations(),
        rho_result: rho,
        gap_result: gap,
        simulator_path,
        lipschitz: problem.measure.lipschitz,
        popoviciu_term: problem.popoviciu_term(),
        direct_path,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::acquisition::AcqBudget;
    use crate::bound::{delta_probability, LambdaPolicy};
    use crate::stl::Signal;

    /// Scalar tilt trace `amp(d)·sin(t)` plus, for the noisy twin, a
    /// seeded offset; counts its rollouts.
    struct Wobble {
        noise: f64,
        base: f64,
        slope: f64,
        domain: Domain,
        calls: AtomicUsize,
    }

    impl Wobble {
        fn new(noise: f64) -> Self {
            Self {
                noise,
                base: 0.2,
                slope: 0.1,
                domain: Domain::cube(1, 0.0, 1.0).unwrap(),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl SystemModel for Wobble {
        fn schema(&self) -> SignalSchema {
            SignalSchema::new(["phi"]).unwrap()
        }
        fn dt(&self) -> f64 {
            0.1
        }
        fn horizon(&self) -> f64 {
            2.0
        }
        fn domain(&self) -> &Domain {
            &self.domain
        }
        fn simulate(&self, d: &[f64], seed: u64) -> Result<Signal> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let offset = if self.noise > 0.0 {
                Normal::new(0.0, self.noise).unwrap().sample(&mut ChaCha8Rng::seed_from_u64(seed))
            } else {
                0.0
            };
            let amp = self.base + self.slope * d[0];
            Signal::scalar(0.1, (0..21).map(|k| amp * (k as f64 * 0.1).sin() + offset).collect())
        }
    }

    fn config(b: f64, r: f64, alpha: f64, c: f64, seed: u64) -> BoundConfig {
        let mut cfg = BoundConfig::new(b, r, 0.05, alpha, c);
        cfg.lambda = LambdaPolicy::Fixed(0.1);
        cfg.acquisition = AcqBudget {
            grid_points_per_dim: 21,
            restarts: 2,
            refine_steps: 2,
        };
        cfg.seed = seed;
        cfg
    }

    fn problem(nominal: Arc<Wobble>, truesys: Arc<Wobble>, r: f64) -> VerificationProblem {
        let spec = SpecAst::Atom(Predicate::new(Functional::AbsCoordinate { index: 0 }, Comparison::Le, 0.95))
            .always(0.0, f64::INFINITY)
            .unwrap();
        VerificationProblem {
            measure: RobustnessMeasure::new(spec, -0.05, 0.75, 1.0, SeminormSpec::coordinate_sup(vec![0], 2.0).unwrap())
                .unwrap(),
            nominal,
            truesys,
            domain: Domain::cube(1, 0.0, 1.0).unwrap(),
            horizon: 2.0,
            risk_weight: r,
            kernel: KernelSpec::default(),
            rho_config: config(0.2, 0.1, 0.05, 0.2, 1),
            gap_config: config(0.1, 0.05, 0.01, 0.1, 2),
        }
    }

    fn wobble_pair(noise: f64) -> (Arc<Wobble>, Arc<Wobble>) {
        (Arc::new(Wobble::new(0.0)), Arc::new(Wobble::new(noise)))
    }

    #[test]
    fn popoviciu_examples() {
        assert!((popoviciu_term(0.2, 0.05, 0.75) - 0.08).abs() < 1e-15);
        assert_eq!(popoviciu_term(0.0, 0.05, 0.75), 0.0);
        assert_eq!(popoviciu_term(1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn worked_example_composes_to_zero() {
        let d1 = delta_probability(0.2, 0.05, 0.1);
        let d2 = delta_probability(0.1, 0.05, 0.05);
        let cert = Certificate::compose(0.46, 0.38, 1.0, popoviciu_term(0.2, 0.05, 0.75), [d1, d2]);
        assert!(cert.ell.abs() < 1e-12, "{}", cert.ell);
        assert_eq!(format!("{:.2}", cert.ell.abs()), "0.00");
        assert!(cert.probability >= 0.84);
        assert!(cert.probability <= d1.min(d2));
    }

    #[test]
    fn composition_is_linear_in_lipschitz() {
        let lossless = Certificate::compose(0.4, 0.0, 1.0, 0.0, [0.9, 0.9]);
        assert_eq!(lossless.ell, 0.4);
        let doubled = Certificate::compose(0.46, 0.1, 2.0, 0.08, [0.9, 0.9]);
        assert!((doubled.ell - (0.46 - 0.2 - 0.08)).abs() < 1e-15);
    }

    #[test]
    fn constant_nominal_robustness_is_bounded_just_below() {
        let mut flat = Wobble::new(0.0);
        flat.base = 0.3;
        flat.slope = 0.0;
        let p = problem(Arc::new(flat), Arc::new(Wobble::new(0.0)), 0.2);
        // the trace peaks at 0.3·sin(1.6) on the 0.1 s grid
        let k = 0.95 - 0.3 * 1.6f64.sin();
        let rho = bound_nominal_robustness(&p).unwrap();
        assert!(rho.terminated);
        let rho_tilde = rho.bound.unwrap();
        let (alpha, c) = (p.rho_config.alpha, p.rho_config.c);
        assert!(rho_tilde < k && rho_tilde >= k - alpha - c - 1e-9, "{rho_tilde} vs {k}");
    }

    #[test]
    fn noiseless_twins_bound_the_gap_near_zero() {
        let (nom, tru) = wobble_pair(0.0);
        let p = problem(nom, tru.clone(), 0.2);
        let gap = bound_sim_gap(&p).unwrap();
        let e = gap.bound.unwrap();
        assert!(e > 0.0 && e <= p.gap_config.alpha + p.gap_config.c + 1e-12, "{e}");
        assert_eq!(tru.calls.load(Ordering::SeqCst), gap.total_evaluations());
    }

    #[test]
    fn campaign_accounting_and_identity() {
        let (nom, tru) = wobble_pair(0.02);
        let p = problem(nom.clone(), tru.clone(), 0.2);
        let direct_cfg = config(0.1, 0.15, 0.05, 0.3, 3);
        let report = run_campaign(
            &p,
            &CampaignOptions {
                direct: Some((direct_cfg, 4)),
                concurrent: true,
                label: None,
            },
            None,
        )
        .unwrap();
        assert!(report.complete());
        let cert = report.simulator_path.as_ref().unwrap();
        assert!((cert.ell + cert.lipschitz * cert.e_tilde + cert.popoviciu_term - cert.rho_tilde).abs() < 1e-15);
        assert!(cert.probability <= cert.delta_factors[0].min(cert.delta_factors[1]));
        let direct = report.direct_path.as_ref().unwrap();
        assert_eq!(report.simulator_true_evals, report.gap_result.total_evaluations());
        assert_eq!(direct.true_system_evals, direct.result.total_evaluations() * 4);
        // the nominal search never touches the true system
        assert_eq!(tru.calls.load(Ordering::SeqCst), report.simulator_true_evals + direct.true_system_evals);
        assert_eq!(
            nom.calls.load(Ordering::SeqCst),
            report.rho_result.total_evaluations() + report.gap_result.total_evaluations()
        );

        let json = report.to_json();
        for key in ["rho_tilde", "e_tilde", "L", "popoviciu_term", "ell", "probability", "delta_factors", "iterations", "true_system_evals"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["iterations"]["direct"], direct.result.terminal_iter);
        assert_eq!(json["true_system_evals"]["simulator_path"], report.simulator_true_evals);
    }

    #[test]
    fn non_terminated_searches_leave_no_certificate() {
        let (nom, tru) = wobble_pair(0.02);
        let mut p = problem(nom, tru, 0.2);
        p.gap_config.max_iters = 2;
        p.gap_config.alpha = 1e-9;
        let report = run_campaign(&p, &CampaignOptions::default(), None).unwrap();
        assert!(report.simulator_path.is_none());
        assert!(!report.complete());
        assert!(report.to_json()["ell"].is_null());
        let err = compose_risk_bound(&p, report.rho_result.clone(), report.gap_result.clone()).unwrap_err();
        assert!(matches!(err, Error::Composition(_)));
    }

    #[test]
    fn journal_resume_reproduces_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let (nom, tru) = wobble_pair(0.02);
        let p = problem(nom, tru, 0.2);
        let opts = CampaignOptions {
            direct: Some((config(0.1, 0.15, 0.05, 0.3, 3), 3)),
            concurrent: false,
            label: Some("r0".into()),
        };
        let first = {
            let j = Journal::create(&path, serde_json::json!({})).unwrap();
            run_campaign(&p, &opts, Some(&j)).unwrap()
        };
        // keep only the header and the first few evaluations, as if killed
        let text = std::fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text.lines().take(6).collect();
        std::fs::write(&path, kept.join("\n") + "\n").unwrap();

        let (nom2, tru2) = wobble_pair(0.02);
        let p2 = problem(nom2.clone(), tru2.clone(), 0.2);
        let j = Journal::open(&path).unwrap();
        assert_eq!(j.cached("r0/rho"), 5);
        let resumed = run_campaign(&p2, &opts, Some(&j)).unwrap();
        assert_eq!(resumed, first);
        // the five logged nominal rollouts were not re-simulated
        assert_eq!(
            nom2.calls.load(Ordering::SeqCst),
            first.rho_result.total_evaluations() + first.gap_result.total_evaluations() - 5
        );

        // a full journal replays without any rollout
        drop(j);
        let (nom3, tru3) = wobble_pair(0.02);
        let p3 = problem(nom3.clone(), tru3.clone(), 0.2);
        let again = run_campaign(&p3, &opts, Some(&Journal::open(&path).unwrap())).unwrap();
        assert_eq!(again, first);
        assert_eq!(tru3.calls.load(Ordering::SeqCst) + nom3.calls.load(Ordering::SeqCst), 0);
        assert!(tru2.calls.load(Ordering::SeqCst) > 0);
    }

    #[test]
    fn artifacts_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let (nom, tru) = wobble_pair(0.02);
        let p = problem(nom, tru, 0.2);
        let report = run_campaign(&p, &CampaignOptions::default(), None).unwrap();
        report.write_artifacts(dir.path()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
        assert_eq!(json, report.to_json());
        assert!(dir.path().join("rho/trace.csv").exists());
        assert!(dir.path().join("gap/trace.csv").exists());
        assert!(!dir.path().join("direct").exists());
    }

    #[test]
    fn direct_path_needs_two_rollouts() {
        let (nom, tru) = wobble_pair(0.02);
        let p = problem(nom, tru, 0.2);
        assert!(direct_risk_bound(&p, &config(0.1, 0.15, 0.05, 0.3, 3), 1).is_err());
    }

    #[test]
    fn problem_validation() {
        let (nom, tru) = wobble_pair(0.02);
        let mut p = problem(nom, tru, 0.2);
        assert!(p.validate().is_ok());
        p.horizon = 5.0;
        assert!(p.validate().is_err());
        p.horizon = 2.0;
        p.risk_weight = -1.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn composition_identity(rho in -1.0..1.0f64, e in 0.0..1.0f64, l in 0.1..5.0f64, r in 0.0..1.0f64, m in 0.01..1.0f64, big in 0.01..1.0f64,
                                d1 in 0.0..1.0f64, d2 in 0.0..1.0f64) {
            let c = Certificate::compose(rho, e, l, popoviciu_term(r, m, big), [d1, d2]);
            prop_assert!((c.ell + l * e + c.popoviciu_term - rho).abs() <= 1e-12);
            prop_assert!(c.probability <= d1.min(d2) + 1e-15);
        }
    }
}
