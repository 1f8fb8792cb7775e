use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use probound::journal::Journal;

mod config;
mod run;

use run::{execute, journal_path, write_metadata, Invocation};

const PRESETS: &[(&str, &str)] = &[
    ("testfn.cfg", include_str!("../presets/testfn.cfg")),
    ("segway.cfg", include_str!("../presets/segway.cfg")),
];

#[derive(Parser)]
#[command(name = "verify", version, about = "Probabilistic bounds on black-box objectives and sim-to-real risk certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the searches described by a configuration file.
    Run {
        /// Path to an INI file, or the name of a bundled preset.
        #[arg(long, short)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory.
        #[arg(long, env = "PROBOUND_OUT")]
        out: Option<PathBuf>,
        /// Also search the true system directly for comparison.
        #[arg(long)]
        direct: bool,
    },
    /// Resume or re-check a run from its journal. Logged evaluations are
    /// reused; the recomputed result must match any existing result.json.
    Replay {
        journal: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Bundled configurations.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

fn preset(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name || n.trim_end_matches(".cfg") == name)
        .map(|(_, text)| *text)
}

fn load_config(spec: &str) -> Result<String, String> {
    let path = Path::new(spec);
    if path.exists() {
        return fs::read_to_string(path).map_err(|e| format!("{spec}: {e}"));
    }
    preset(spec).map(str::to_string).ok_or_else(|| {
        let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
        format!("config {spec:?} not found (not a file, and not one of the presets {})", names.join(", "))
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| format!("thread pool: {e}"))
}

fn report(summary: &serde_json::Value, all_terminated: bool, out: &Path) -> ExitCode {
    let mut shown = summary.clone();
    if let Some(obj) = shown.as_object_mut() {
        obj.remove("runs");
    }
    println!("{}", serde_json::to_string_pretty(&shown).unwrap_or_default());
    println!("artifacts in {}", out.display());
    if all_terminated {
        ExitCode::SUCCESS
    } else {
        eprintln!("warning: at least one search hit max_iters without reaching F <= alpha");
        ExitCode::from(2)
    }
}

fn cmd_run(inv: Invocation, jobs: Option<usize>, out: Option<PathBuf>) -> Result<ExitCode, String> {
    let cfg = inv.resolve()?;
    let out = out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("out/{}-seed{}", cfg.mode.name(), cfg.seed)));
    fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    let jobs = jobs.unwrap_or(cfg.jobs);
    let journal = Journal::create(journal_path(&out), inv.header()).map_err(|e| e.to_string())?;
    write_metadata(&out, &inv, &cfg, jobs).map_err(|e| e.to_string())?;
    let outcome = thread_pool(jobs)?
        .install(|| execute(&cfg, &out, &journal))
        .map_err(|e| e.to_string())?;
    Ok(report(&outcome.summary, outcome.all_terminated, &out))
}

fn cmd_replay(path: PathBuf, jobs: Option<usize>) -> Result<ExitCode, String> {
    let journal = Journal::open(&path).map_err(|e| e.to_string())?;
    let header = journal.header().ok_or("journal has no header line")?;
    let inv = Invocation::from_header(header)?;
    let cfg = inv.resolve()?;
    let out = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let result_path = out.join("result.json");
    let previous = fs::read_to_string(&result_path).ok();
    let jobs = jobs.unwrap_or(cfg.jobs);
    let outcome = thread_pool(jobs)?
        .install(|| execute(&cfg, &out, &journal))
        .map_err(|e| e.to_string())?;
    if let Some(prev) = previous {
        let now = fs::read_to_string(&result_path).map_err(|e| e.to_string())?;
        if prev != now {
            fs::write(out.join("result.previous.json"), prev).map_err(|e| e.to_string())?;
            return Err(format!(
                "replayed result differs from the recorded one (old copy kept in {})",
                out.join("result.previous.json").display()
            ));
        }
        eprintln!("replay matches {}", result_path.display());
    }
    Ok(report(&outcome.summary, outcome.all_terminated, &out))
}

fn main() -> ExitCode {
    // clap's own failure status is 2, which here means "did not terminate"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            repeats,
            jobs,
            out,
            direct,
        } => load_config(&config).and_then(|text| {
            cmd_run(
                Invocation {
                    config_text: text,
                    seed,
                    repeats,
                    direct,
                },
                jobs,
                out,
            )
        }),
        Command::Replay { journal, jobs } => cmd_replay(journal, jobs),
        Command::Presets { action } => match action {
            PresetAction::List => {
                for (name, text) in PRESETS {
                    let blurb = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                    println!("{name:<12} {blurb}");
                }
                Ok(ExitCode::SUCCESS)
            }
            PresetAction::Show { name } => preset(&name)
                .map(|text| {
                    print!("{text}");
                    ExitCode::SUCCESS
                })
                .ok_or_else(|| format!("no preset named {name:?}")),
        },
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
