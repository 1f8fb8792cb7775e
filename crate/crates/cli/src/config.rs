//! INI run configuration. Sections and dotted keys mirror the library
//! types; any key the parser does not consume is reported by its path.

use std::collections::BTreeMap;
use std::fmt;

use ini::Ini;
use probound::acquisition::AcqBudget;
use probound::bound::{BoundConfig, LambdaPolicy};
use probound::domain::Domain;
use probound::kernel::KernelSpec;
use probound::stl::{parse_spec, SeminormKind, SignalSchema, SpecAst};
use probound::systems::{SegwayGains, SegwayParams, SEGWAY_COORDINATES};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    TestFunction,
    Verify,
    Direct,
    Both,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::TestFunction => "testfn",
            Mode::Verify => "verify",
            Mode::Direct => "direct",
            Mode::Both => "both",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TestFnConfig {
    pub noise_sigma: f64,
    pub domain: Domain,
    pub bound: BoundConfig,
}

#[derive(Clone, Debug)]
pub struct SystemConfig {
    pub params: SegwayParams,
    pub domain: Domain,
    pub spec: SpecAst,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    pub lipschitz: f64,
    pub seminorm: SeminormKind,
    pub risk_weight: f64,
    pub rho: BoundConfig,
    pub gap: BoundConfig,
    pub direct: BoundConfig,
    pub n_rollouts: usize,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub repeats: usize,
    /// Worker threads; 0 picks the machine's parallelism.
    pub jobs: usize,
    pub out: Option<String>,
    pub kernel: KernelSpec,
    pub testfn: Option<TestFnConfig>,
    pub system: Option<SystemConfig>,
}

/// Keys of one section, consumed as they are read.
struct Section {
    name: String,
    props: BTreeMap<String, String>,
}

impl Section {
    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.props.remove(key).map(|v| v.trim().to_string())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError(format!("{}: cannot parse {v:?}", self.path(key)))),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn required_f64(&mut self, key: &str) -> Result<f64> {
        self.parse(key)?.ok_or_else(|| ConfigError(format!("{}: missing", self.path(key))))
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn vector(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.take(key) else { return Ok(None) };
        raw.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|_| ConfigError(format!("{}: expected comma-separated numbers, got {raw:?}", self.path(key))))
    }

    fn finish(self) -> Result<()> {
        match self.props.keys().next() {
            Some(k) => err(format!("unknown key {}.{k}", self.name)),
            None => Ok(()),
        }
    }
}

/// Drops a trailing `; ...` or `# ...` that follows whitespace.
fn strip_inline_comment(value: &str) -> &str {
    let bytes = value.as_bytes();
    for i in 1..bytes.len() {
        if (bytes[i] == b';' || bytes[i] == b'#') && bytes[i - 1].is_ascii_whitespace() {
            return value[..i].trim_end();
        }
    }
    value
}

struct Document {
    sections: BTreeMap<String, Section>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError(format!("config syntax: {e}")))?;
        let mut sections = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return err(format!("unknown key {k} (keys must sit inside a [section])"));
                }
                continue;
            };
            let mut map = BTreeMap::new();
            for (k, v) in props.iter() {
                if map.insert(k.to_string(), strip_inline_comment(v).to_string()).is_some() {
                    return err(format!("duplicate key {name}.{k}"));
                }
            }
            sections.insert(
                name.to_string(),
                Section {
                    name: name.to_string(),
                    props: map,
                },
            );
        }
        Ok(Self { sections })
    }

    fn section(&mut self, name: &str) -> Section {
        self.sections.remove(name).unwrap_or(Section {
            name: name.to_string(),
            props: BTreeMap::new(),
        })
    }

    fn has(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    fn finish(self) -> Result<()> {
        match self.sections.keys().next() {
            Some(name) => err(format!("unknown section [{name}]")),
            None => Ok(()),
        }
    }
}

fn lib<T>(path: &str, r: probound::Result<T>) -> Result<T> {
    r.map_err(|e| ConfigError(format!("{path}: {e}")))
}

fn domain(sec: &mut Section, default: (f64, f64)) -> Result<Domain> {
    let lower = sec.vector("domain.lower")?.unwrap_or(vec![default.0; 2]);
    let upper = sec.vector("domain.upper")?.unwrap_or(vec![default.1; 2]);
    lib(&sec.path("domain"), Domain::new(lower, upper))
}

fn bound_config(sec: &mut Section) -> Result<BoundConfig> {
    let mut cfg = BoundConfig::new(
        sec.required_f64("b")?,
        sec.required_f64("r")?,
        sec.required_f64("delta")?,
        sec.required_f64("alpha")?,
        sec.required_f64("c")?,
    );
    cfg.max_iters = sec.usize_or("max_iters", cfg.max_iters)?;
    cfg.init_points = sec.usize_or("init_points", cfg.init_points)?;
    if let Some(raw) = sec.take("lambda") {
        cfg.lambda = if raw == "shifted" {
            LambdaPolicy::Shifted
        } else {
            LambdaPolicy::Fixed(
                raw.parse()
                    .map_err(|_| ConfigError(format!("{}: expected \"shifted\" or a number, got {raw:?}", sec.path("lambda"))))?,
            )
        };
    }
    let d = AcqBudget::default();
    cfg.acquisition = AcqBudget {
        grid_points_per_dim: sec.usize_or("acquisition.grid_points_per_dim", d.grid_points_per_dim)?,
        restarts: sec.usize_or("acquisition.restarts", d.restarts)?,
        refine_steps: sec.usize_or("acquisition.refine_steps", d.refine_steps)?,
    };
    lib(&sec.name, cfg.validate())?;
    Ok(cfg)
}

fn kernel(sec: &mut Section) -> Result<KernelSpec> {
    let family = sec.take("family").unwrap_or_else(|| "matern".into());
    let lengthscale = sec.f64_or("lengthscale", 1.0)?;
    let variance = sec.f64_or("signal_variance", 1.0)?;
    let spec = match family.as_str() {
        "matern" => KernelSpec::matern(lengthscale, sec.f64_or("nu", 10.0)?, variance),
        "squared_exponential" => KernelSpec::squared_exponential(lengthscale, variance),
        other => return err(format!("kernel.family: unknown family {other:?} (matern, squared_exponential)")),
    };
    lib("kernel", spec)
}

fn segway_params(sec: &mut Section) -> Result<SegwayParams> {
    let mut p = SegwayParams::default();
    if let Some(model) = sec.take("model") {
        if model != "segway" {
            return err(format!("system.model: unknown model {model:?} (segway)"));
        }
    }
    if let Some(goal) = sec.vector("goal")? {
        let [x, y] = goal[..] else {
            return err("system.goal: expected two numbers");
        };
        p.goal = [x, y];
    }
    p.dt = sec.f64_or("dt", p.dt)?;
    p.horizon = sec.f64_or("horizon", p.horizon)?;
    p.init_noise_sigma = sec.f64_or("init_noise_sigma", p.init_noise_sigma)?;
    p.angle_noise_sigma = sec.f64_or("angle_noise_sigma", p.angle_noise_sigma)?;
    p.process_noise_sigma = sec.f64_or("process_noise_sigma", p.process_noise_sigma)?;
    p.arrive_radius = sec.f64_or("arrive_radius", p.arrive_radius)?;
    p.natural_frequency = sec.f64_or("natural_frequency", p.natural_frequency)?;
    p.coupling = sec.f64_or("coupling", p.coupling)?;
    let pole = sec.f64_or("pole", 2.0)?;
    let placed = lib("system.pole", SegwayGains::pole_placement(p.natural_frequency, p.coupling, pole))?;
    let g = &mut p.gains;
    *g = placed;
    g.position = sec.f64_or("gains.position", g.position)?;
    g.velocity = sec.f64_or("gains.velocity", g.velocity)?;
    g.tilt = sec.f64_or("gains.tilt", g.tilt)?;
    g.tilt_rate = sec.f64_or("gains.tilt_rate", g.tilt_rate)?;
    g.heading = sec.f64_or("gains.heading", g.heading)?;
    g.max_turn_rate = sec.f64_or("gains.max_turn_rate", g.max_turn_rate)?;
    g.max_position_error = sec.f64_or("gains.max_position_error", g.max_position_error)?;
    lib("system", p.validate())?;
    Ok(p)
}

fn system_config(doc: &mut Document) -> Result<SystemConfig> {
    let mut sys = doc.section("system");
    let params = segway_params(&mut sys)?;
    let domain = domain(&mut sys, (0.0, 5.0))?;
    sys.finish()?;

    let schema = SignalSchema::new(SEGWAY_COORDINATES).expect("static names");
    let mut spec = doc.section("spec");
    let text = spec.take("text").unwrap_or_else(|| "G[0,inf] (abs(phi) <= 0.95)".into());
    let ast = parse_spec(&text, &schema).map_err(|e| ConfigError(format!("spec.text: {e}")))?;
    let clamp_lo = spec.f64_or("clamp_lo", -0.05)?;
    let clamp_hi = spec.f64_or("clamp_hi", 0.75)?;
    let lipschitz = spec.f64_or("lipschitz", 1.0)?;
    let risk_weight = spec.f64_or("risk_weight", 0.2)?;
    let seminorm = match spec.take("seminorm") {
        None => SeminormKind::CoordinateSup {
            coordinates: vec![probound::systems::PHI],
        },
        Some(s) if s == "euclidean" => SeminormKind::EuclideanSup,
        Some(s) => SeminormKind::CoordinateSup {
            coordinates: s
                .split(',')
                .map(|n| {
                    schema
                        .index_of(n.trim())
                        .ok_or_else(|| ConfigError(format!("spec.seminorm: unknown coordinate {:?}", n.trim())))
                })
                .collect::<Result<_>>()?,
        },
    };
    spec.finish()?;

    let mut rho = doc.section("bound.rho");
    let rho_cfg = bound_config(&mut rho)?;
    rho.finish()?;
    let mut gap = doc.section("bound.gap");
    let gap_cfg = bound_config(&mut gap)?;
    gap.finish()?;
    let mut direct = doc.section("bound.direct");
    let n_rollouts = direct.usize_or("n_rollouts", 10)?;
    if n_rollouts < 2 {
        return err("bound.direct.n_rollouts: must be >= 2");
    }
    let direct_cfg = bound_config(&mut direct)?;
    direct.finish()?;

    Ok(SystemConfig {
        params,
        domain,
        spec: ast,
        clamp_lo,
        clamp_hi,
        lipschitz,
        seminorm,
        risk_weight,
        rho: rho_cfg,
        gap: gap_cfg,
        direct: direct_cfg,
        n_rollouts,
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::parse(text)?;
        let mut run = doc.section("run");
        let mode = match run.take("mode").as_deref() {
            Some("testfn") => Mode::TestFunction,
            Some("verify") | None => Mode::Verify,
            Some("direct") => Mode::Direct,
            Some("both") => Mode::Both,
            Some(other) => return err(format!("run.mode: unknown mode {other:?} (testfn, verify, direct, both)")),
        };
        let seed = run.parse("seed")?.unwrap_or(0);
        let repeats = run.usize_or("repeats", 1)?;
        let jobs = run.usize_or("jobs", 0)?;
        let out = run.take("out");
        run.finish()?;

        let mut k = doc.section("kernel");
        let kernel = kernel(&mut k)?;
        k.finish()?;

        let (testfn, system) = if mode == Mode::TestFunction {
            let mut t = doc.section("testfn");
            let noise_sigma = t.f64_or("noise_sigma", 0.001)?;
            if !(noise_sigma >= 0.0) {
                return err("testfn.noise_sigma: must be >= 0");
            }
            let domain = domain(&mut t, (0.0, 5.0))?;
            t.finish()?;
            if !doc.has("bound.testfn") {
                return err("bound.testfn: missing section");
            }
            let mut b = doc.section("bound.testfn");
            let bound = bound_config(&mut b)?;
            b.finish()?;
            (
                Some(TestFnConfig {
                    noise_sigma,
                    domain,
                    bound,
                }),
                None,
            )
        } else {
            for needed in ["bound.rho", "bound.gap"] {
                if !doc.has(needed) {
                    return err(format!("{needed}: missing section"));
                }
            }
            if matches!(mode, Mode::Direct | Mode::Both) && !doc.has("bound.direct") {
                return err("bound.direct: missing section");
            }
            (None, Some(system_config(&mut doc)?))
        };
        doc.finish()?;

        let cfg = Self {
            mode,
            seed,
            repeats,
            jobs,
            out,
            kernel,
            testfn,
            system,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.repeats == 0 {
            return err("run.repeats: must be >= 1");
        }
        Ok(())
    }
}
