//! Executes a parsed configuration and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use probound::bound::{run_upper_bound, BoundResult};
use probound::journal::Journal;
use probound::seeding::derive_seed;
use probound::stl::{RobustnessMeasure, SeminormSpec};
use probound::systems::{test_function_system, SegwayModel};
use probound::verify::{direct_risk_bound_logged, run_campaign, CampaignOptions, VerificationProblem};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig, SystemConfig};

/// Everything that decides the numbers in `result.json`. Stored in the
/// journal header so a run can be resumed or re-checked.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub config_text: String,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub direct: bool,
}

impl Invocation {
    pub fn header(&self) -> Value {
        json!({
            "tool": "verify",
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config_text,
            "overrides": { "seed": self.seed, "repeats": self.repeats, "direct": self.direct },
        })
    }

    pub fn from_header(header: &Value) -> Result<Self, String> {
        let config_text = header
            .get("config")
            .and_then(Value::as_str)
            .ok_or("journal header carries no config")?
            .to_string();
        let o = header.get("overrides").cloned().unwrap_or(Value::Null);
        Ok(Self {
            config_text,
            seed: o.get("seed").and_then(Value::as_u64),
            repeats: o.get("repeats").and_then(Value::as_u64).map(|r| r as usize),
            direct: o.get("direct").and_then(Value::as_bool).unwrap_or(false),
        })
    }

    pub fn resolve(&self) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::parse(&self.config_text).map_err(|e| e.to_string())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        if self.direct {
            match cfg.mode {
                Mode::Verify => cfg.mode = Mode::Both,
                Mode::TestFunction => return Err("--direct needs a system configuration, not mode = testfn".into()),
                _ => {}
            }
        }
        cfg.check().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Outcome of one repeat.
struct RunOutput {
    json: Value,
    /// (campaign, search result) for traces and the `F_i` log.
    searches: Vec<(&'static str, BoundResult)>,
    all_terminated: bool,
}

pub struct Outcome {
    pub summary: Value,
    pub all_terminated: bool,
}

fn build_problem(sys: &SystemConfig, kernel: probound::kernel::KernelSpec, seeds: (u64, u64)) -> probound::Result<VerificationProblem> {
    let horizon = sys.params.horizon;
    let seminorm = SeminormSpec {
        kind: sys.seminorm.clone(),
        horizon,
    };
    let measure = RobustnessMeasure::new(sys.spec.clone(), sys.clamp_lo, sys.clamp_hi, sys.lipschitz, seminorm)?;
    let mut rho_config = sys.rho.clone();
    rho_config.seed = seeds.0;
    let mut gap_config = sys.gap.clone();
    gap_config.seed = seeds.1;
    let problem = VerificationProblem {
        measure,
        nominal: Arc::new(SegwayModel::nominal(sys.params.clone(), sys.domain.clone())?),
        truesys: Arc::new(SegwayModel::true_twin(sys.params.clone(), sys.domain.clone())?),
        domain: sys.domain.clone(),
        horizon,
        risk_weight: sys.risk_weight,
        kernel,
        rho_config,
        gap_config,
    };
    problem.validate()?;
    Ok(problem)
}

fn search_json(r: &BoundResult) -> Value {
    json!({
        "bound": r.bound,
        "terminated": r.terminated,
        "terminal_iter": r.terminal_iter,
        "terminal_f": r.iterations.last().map(|it| it.f),
        "alpha": r.alpha,
        "c": r.c,
        "probability": r.probability,
        "evaluations": r.total_evaluations(),
    })
}

fn run_one(cfg: &RunConfig, rep: usize, journal: &Journal) -> probound::Result<RunOutput> {
    let base = derive_seed(cfg.seed, rep as u64);
    let label = format!("run_{rep:03}");
    match cfg.mode {
        Mode::TestFunction => {
            let t = cfg.testfn.as_ref().expect("testfn section parsed");
            let mut bound = t.bound.clone();
            bound.seed = derive_seed(base, 3);
            let campaign = format!("{label}/testfn");
            let mut objective = |z: &[f64], k: usize| {
                let seed = derive_seed(bound.seed, k as u64);
                journal.record(&campaign, k, z, seed, || test_function_system(z, t.noise_sigma, seed))
            };
            let result = run_upper_bound(&mut objective, &t.domain, &bound, &cfg.kernel)?;
            Ok(RunOutput {
                json: search_json(&result),
                all_terminated: result.terminated,
                searches: vec![("testfn", result)],
            })
        }
        Mode::Direct => {
            let sys = cfg.system.as_ref().expect("system section parsed");
            let problem = build_problem(sys, cfg.kernel, (derive_seed(base, 0), derive_seed(base, 1)))?;
            let mut direct = sys.direct.clone();
            direct.seed = derive_seed(base, 2);
            let d = direct_risk_bound_logged(&problem, &direct, sys.n_rollouts, Some(journal), Some(&label))?;
            let mut json = search_json(&d.result);
            json["n_rollouts"] = json!(d.n_rollouts);
            json["true_system_evals"] = json!(d.true_system_evals);
            Ok(RunOutput {
                json,
                all_terminated: d.result.terminated,
                searches: vec![("direct", d.result)],
            })
        }
        Mode::Verify | Mode::Both => {
            let sys = cfg.system.as_ref().expect("system section parsed");
            let problem = build_problem(sys, cfg.kernel, (derive_seed(base, 0), derive_seed(base, 1)))?;
            let direct = (cfg.mode == Mode::Both).then(|| {
                let mut d = sys.direct.clone();
                d.seed = derive_seed(base, 2);
                (d, sys.n_rollouts)
            });
            let options = CampaignOptions {
                direct,
                concurrent: true,
                label: Some(label),
            };
            let report = run_campaign(&problem, &options, Some(journal))?;
            let mut searches = vec![("rho", report.rho_result.clone()), ("gap", report.gap_result.clone())];
            if let Some(d) = &report.direct_path {
                searches.push(("direct", d.result.clone()));
            }
            Ok(RunOutput {
                json: report.to_json(),
                all_terminated: report.complete(),
                searches,
            })
        }
    }
}

fn write_json(path: &Path, value: &Value) -> probound::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_run_dir(dir: &Path, mode: Mode, out: &RunOutput) -> probound::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("result.json"), &out.json)?;
    for (name, result) in &out.searches {
        let trace_dir = if mode == Mode::TestFunction { dir.to_path_buf() } else { dir.join(name) };
        fs::create_dir_all(&trace_dir)?;
        result.write_trace_csv(fs::File::create(trace_dir.join("trace.csv"))?)?;
    }
    Ok(())
}

fn summarize(cfg: &RunConfig, outputs: &[RunOutput]) -> Value {
    let terminated = outputs.iter().filter(|o| o.all_terminated).count();
    let mut summary = json!({
        "mode": cfg.mode.name(),
        "seed": cfg.seed,
        "repeats": cfg.repeats,
        "terminated": terminated,
        "runs": outputs.iter().map(|o| o.json.clone()).collect::<Vec<_>>(),
    });
    if cfg.mode == Mode::TestFunction {
        let bounds: Vec<f64> = outputs.iter().filter_map(|o| o.json["bound"].as_f64()).collect();
        summary["bound_min"] = json!(bounds.iter().cloned().reduce(f64::min));
        summary["bound_max"] = json!(bounds.iter().cloned().reduce(f64::max));
    }
    summary
}

/// Runs every repeat, logging evaluations to `journal`, and writes
/// `result.json`, traces and `fi_decay.csv` under `out`.
pub fn execute(cfg: &RunConfig, out: &Path, journal: &Journal) -> probound::Result<Outcome> {
    fs::create_dir_all(out)?;
    let outputs: Vec<RunOutput> = (0..cfg.repeats)
        .into_par_iter()
        .map(|rep| run_one(cfg, rep, journal))
        .collect::<probound::Result<_>>()?;

    let mut decay = csv::Writer::from_path(out.join("fi_decay.csv"))?;
    decay.write_record(["run", "campaign", "i", "f"])?;
    for (rep, o) in outputs.iter().enumerate() {
        for (name, result) in &o.searches {
            for it in &result.iterations {
                decay.write_record([rep.to_string(), name.to_string(), it.i.to_string(), format!("{:e}", it.f)])?;
            }
        }
    }
    decay.flush()?;

    let summary = if cfg.repeats == 1 {
        write_run_dir(out, cfg.mode, &outputs[0])?;
        outputs[0].json.clone()
    } else {
        for (rep, o) in outputs.iter().enumerate() {
            write_run_dir(&out.join(format!("run_{rep:03}")), cfg.mode, o)?;
        }
        let s = summarize(cfg, &outputs);
        write_json(&out.join("result.json"), &s)?;
        s
    };
    Ok(Outcome {
        all_terminated: outputs.iter().all(|o| o.all_terminated),
        summary,
    })
}

pub fn write_metadata(out: &Path, inv: &Invocation, cfg: &RunConfig, jobs: usize) -> probound::Result<()> {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &out.join("metadata.json"),
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": now,
            "mode": cfg.mode.name(),
            "seed": cfg.seed,
            "repeats": cfg.repeats,
            "jobs": jobs,
            "overrides": inv.header()["overrides"],
            "args": std::env::args().collect::<Vec<_>>(),
        }),
    )
}

pub fn journal_path(out: &Path) -> PathBuf {
    out.join("journal.jsonl")
}
