use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use shrink_core::cf_bad::{self, CfSpec};
use shrink_core::construction::{self, ScheduleMode, ScheduleOptions, Setup};
use shrink_core::counterexample::{self, CounterexampleConfig, LevelChoice};
use shrink_core::dichotomy;
use shrink_core::psi::{ApproxFn, Real};
use shrink_core::report::to_json_line;
use shrink_core::thermo::PressureProfile;
use shrink_core::{IfsSpec, SymbolStream};

#[derive(Parser, Debug)]
#[command(name = "shrink", version, about = "Shrinking-target dichotomy toolkit")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for result files and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Similarity dimension and Hill–Velani exponents.
    Dimension,
    /// Zero/full measure verdict for a shrinking-target set.
    Dichotomy,
    /// Sample the Cantor construction and check its mass bounds.
    Construct,
    /// KL identity and witness inequalities for an inhomogeneous system.
    Counterexample,
    /// Bounded partial quotients: dimension, growth rate and verdict.
    CfBad(CfBadArgs),
}

#[derive(Args, Debug)]
struct CfBadArgs {
    #[arg(long = "Q")]
    q: Option<u32>,
    /// ψ in the form `exp:gamma=1.2[,beta=..][,c=..]`, `poly:beta=..` or `superexp:gamma=..`.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<Output, Failure>;

/// A command's result: named files plus whether the question was decided.
struct Output {
    files: Vec<(String, String)>,
    decided: bool,
}

impl Output {
    fn single<T: Serialize>(name: &str, value: &T, decided: bool) -> Self {
        Output { files: vec![(name.to_string(), to_json_line(value) + "\n")], decided }
    }
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_digest: String,
    seed: u64,
    workers: usize,
    tool_version: &'static str,
    wall_time_ms: u128,
    exit_code: u8,
    outputs: Vec<OutputEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(path: Option<&Path>) -> Result<(Value, Vec<u8>), Failure> {
    let Some(path) = path else {
        return Ok((json!({}), Vec::new()));
    };
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Failure::Usage("config must be a JSON object".into()));
    }
    Ok((value, bytes))
}

fn field<'a>(cfg: &'a Value, key: &str) -> Option<&'a Value> {
    cfg.get(key).filter(|v| !v.is_null())
}

fn require<'a>(cfg: &'a Value, key: &str) -> Result<&'a Value, Failure> {
    field(cfg, key).ok_or_else(|| Failure::Usage(format!("config is missing `{key}`")))
}

fn ifs_from(cfg: &Value) -> Result<IfsSpec, Failure> {
    let doc = if cfg.get("maps").is_some() { cfg } else { require(cfg, "ifs")? };
    Ok(IfsSpec::from_value(doc)?)
}

fn u64_field(cfg: &Value, key: &str, default: u64) -> Result<u64, Failure> {
    match field(cfg, key) {
        None => Ok(default),
        Some(v) => v.as_u64().ok_or_else(|| Failure::Usage(format!("`{key}` must be a nonnegative integer"))),
    }
}

fn f64_field(cfg: &Value, key: &str) -> Result<Option<f64>, Failure> {
    match field(cfg, key) {
        None => Ok(None),
        Some(v) => Ok(Some(Real::from_json(v, key)?.value())),
    }
}

fn u32_list(v: &Value, key: &str) -> Result<Vec<u32>, Failure> {
    v.as_array()
        .ok_or_else(|| Failure::Usage(format!("`{key}` must be an array")))?
        .iter()
        .map(|x| x.as_u64().and_then(|n| u32::try_from(n).ok()).ok_or_else(|| Failure::Usage(format!("`{key}` entries must be integers"))))
        .collect()
}

fn cmd_dimension(cfg: &Value) -> Outcome {
    let ifs = ifs_from(cfg)?;
    let profile = PressureProfile::new(&ifs);
    let d = profile.dimension()?;
    let mut table = Vec::new();
    if let Some(alphas) = field(cfg, "alphas") {
        for a in alphas.as_array().ok_or_else(|| Failure::Usage("`alphas` must be an array".into()))? {
            let alpha = Real::from_json(a, "alphas")?.value();
            let s = profile.hv_exponent(alpha)?;
            table.push(json!({ "alpha": alpha, "s": s }));
        }
    }
    let out = json!({
        "ifs": ifs.summary(),
        "separation": ifs.check_separation(),
        "d": d,
        "hv_exponents": table,
    });
    Ok(Output::single("dimension.json", &out, d.certified))
}

fn cmd_dichotomy(cfg: &Value) -> Outcome {
    let ifs = ifs_from(cfg)?;
    let x = SymbolStream::from_json(require(cfg, "x")?)?;
    let psi = ApproxFn::from_json(require(cfg, "psi")?)?;
    let s = f64_field(cfg, "s")?;
    let v = dichotomy::classify(&ifs, &x, &psi, s)?;
    let decided = v.is_decided();
    Ok(Output::single("verdict.json", &v, decided))
}

fn cmd_construct(cfg: &Value, seed: u64) -> Outcome {
    let ifs = ifs_from(cfg)?;
    let x = SymbolStream::from_json(require(cfg, "x")?)?;
    let psi = ApproxFn::from_json(require(cfg, "psi")?)?;
    let n_max = u64_field(cfg, "n_max", 20_000)?;
    let cap = u64_field(cfg, "cap", 10_000)?;
    let samples = u64_field(cfg, "samples", 100)?;
    let depth = u64_field(cfg, "depth", 200)?;
    let mode = match field(cfg, "schedule").and_then(Value::as_str).unwrap_or("relaxed") {
        "relaxed" => ScheduleMode::Relaxed,
        "strict" => ScheduleMode::Strict,
        other => return Err(Failure::Usage(format!("unknown schedule mode `{other}`"))),
    };
    if mode == ScheduleMode::Strict && samples > 0 {
        return Err(Failure::Usage(
            "sampling is refused on strict schedules: their levels cannot be realized at this scale, use schedule \"relaxed\"".into(),
        ));
    }
    let setup = Setup::new(&ifs, &x, &psi, n_max)?;
    let opts = match mode {
        ScheduleMode::Strict => ScheduleOptions::strict(),
        ScheduleMode::Relaxed => ScheduleOptions::relaxed(cap),
    };
    let schedule = construction::build_schedule(&setup, &opts)?;
    let draws = (0..samples)
        .map(|i| construction::sample_eta(&setup, &schedule, depth, seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = construction::mass_bound_report(&setup, &schedule, &draws)?;
    let mut dump = String::new();
    for d in &draws {
        dump.push_str(&to_json_line(d));
        dump.push('\n');
    }
    let summary = json!({
        "schedule": schedule,
        "mass_bound_report": report,
        "hit_set": format!("{}/{}", report.hit_set_matches, draws.len()),
        "certificate": false,
    });
    Ok(Output {
        files: vec![("samples.jsonl".into(), dump), ("construct.json".into(), to_json_line(&summary) + "\n")],
        decided: true,
    })
}

fn cmd_counterexample(cfg: &Value) -> Outcome {
    let ifs = match field(cfg, "ifs") {
        Some(doc) => IfsSpec::from_value(doc)?,
        None => counterexample::default_system(),
    };
    let alpha = Real::from_json(require(cfg, "alpha")?, "alpha")?;
    let mut cc = CounterexampleConfig::new(&ifs, alpha)?;
    if let Some(p) = field(cfg, "psi") {
        cc = cc.with_psi(ApproxFn::from_json(p)?);
    }
    if let Some(p) = field(cfg, "psibar") {
        cc = cc.with_psibar(ApproxFn::from_json(p)?);
    }
    let kl_certificate = counterexample::kl_certificate(&cc)?;
    let witness = match field(cfg, "levels") {
        Some(Value::String(s)) if s == "none" => None,
        other => {
            let levels = match other {
                None => LevelChoice::default(),
                Some(v) => LevelChoice::Explicit(
                    v.as_array()
                        .ok_or_else(|| Failure::Usage("`levels` must be an array or \"none\"".into()))?
                        .iter()
                        .map(|n| n.as_u64().ok_or_else(|| Failure::Usage("`levels` entries must be integers".into())))
                        .collect::<Result<_, _>>()?,
                ),
            };
            let k_max = u64_field(cfg, "k_max", 3)? as usize;
            let depth = u64_field(cfg, "word_depth", 50)? as usize;
            Some(counterexample::witness_report(&cc, &levels, depth, k_max)?)
        }
    };
    let out = json!({ "kl_certificate": kl_certificate, "witness": witness });
    Ok(Output::single("counterexample.json", &out, true))
}

fn cmd_cf_bad(cfg: &Value, args: &CfBadArgs, seed: u64) -> Outcome {
    let q = match args.q {
        Some(q) => q,
        None => u64_field(cfg, "Q", 0)? as u32,
    };
    if q == 0 {
        return Err(Failure::Usage("Q must be at least 1 (pass --Q or set `Q`)".into()));
    }
    let psi = match (&args.psi, field(cfg, "psi")) {
        (Some(s), _) => ApproxFn::parse_cli(s)?,
        (None, Some(Value::String(s))) => ApproxFn::parse_cli(s)?,
        (None, Some(v)) => ApproxFn::from_json(v)?,
        (None, None) => return Err(Failure::Usage("missing ψ (pass --psi or set `psi`)".into())),
    };
    let s = match args.s {
        Some(s) => s,
        None => f64_field(cfg, "s")?.ok_or_else(|| Failure::Usage("missing s (pass --s or set `s`)".into()))?,
    };
    let requested = match args.depth {
        Some(d) => d,
        None => u64_field(cfg, "depth", 12)? as usize,
    };
    // keep Q^{depth+1} within the enumeration limit
    let mut depth = requested.max(1);
    while depth > 1 && (q as f64).powi(depth as i32 + 1) > cf_bad::ENUMERATION_LIMIT {
        depth -= 1;
    }
    let dimension = cf_bad::badq_dimension(q, depth)?;
    let verdict = cf_bad::bad_dichotomy(q, &psi, s, depth)?;
    let sum_depth = u64_field(cfg, "sum_depth", 30)? as usize;
    let sums = cf_bad::bad_sum(q, &psi, s, sum_depth)?;
    let distortion = cf_bad::empirical_distortion(q, u64_field(cfg, "distortion_samples", 1000)? as usize, 30, seed)?;
    let orbit = match field(cfg, "orbit") {
        None => None,
        Some(o) => {
            let prefix = field(o, "prefix").map(|v| u32_list(v, "prefix")).transpose()?.unwrap_or_default();
            let period = field(o, "period").map(|v| u32_list(v, "period")).transpose()?.unwrap_or_default();
            let spec = CfSpec::new(prefix, period)?;
            Some(cf_bad::gauss_orbit(&spec, u64_field(o, "n", 10)? as usize, 40)?)
        }
    };
    let decided = verdict.is_decided();
    let out = json!({
        "Q": q,
        "depth_requested": requested,
        "depth": depth,
        "dimension": dimension,
        "verdict": verdict,
        "partial_sums": sums,
        "distortion": distortion,
        "orbit": orbit,
    });
    Ok(Output::single("cf_bad.json", &out, decided))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Dimension => "dimension",
        Command::Dichotomy => "dichotomy",
        Command::Construct => "construct",
        Command::Counterexample => "counterexample",
        Command::CfBad(_) => "cf-bad",
    }
}

fn run(cli: &Cli) -> Result<(Output, Vec<u8>), Failure> {
    let (cfg, bytes) = load_config(cli.config.as_deref())?;
    let out = match &cli.command {
        Command::Dimension => cmd_dimension(&cfg),
        Command::Dichotomy => cmd_dichotomy(&cfg),
        Command::Construct => cmd_construct(&cfg, cli.seed),
        Command::Counterexample => cmd_counterexample(&cfg),
        Command::CfBad(args) => cmd_cf_bad(&cfg, args, cli.seed),
    }?;
    let mut digest_input = bytes;
    if let Command::CfBad(a) = &cli.command {
        digest_input.extend(format!("\n{:?}", (a.q, &a.psi, a.s, a.depth)).as_bytes());
    }
    Ok((out, digest_input))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers.max(1)).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let start = Instant::now();
    let (out, digest_input) = match run(&cli) {
        Ok(r) => r,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let code: u8 = if out.decided { 0 } else { 3 };
    match &cli.out {
        None => {
            for (_, text) in &out.files {
                print!("{text}");
            }
        }
        Some(dir) => {
            if let Err(e) = write_outputs(dir, &cli, &out, &digest_input, start, code) {
                eprintln!("error: {}: {e}", dir.display());
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::from(code)
}

fn write_outputs(dir: &Path, cli: &Cli, out: &Output, digest_input: &[u8], start: Instant, code: u8) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for (name, text) in &out.files {
        fs::write(dir.join(name), text)?;
        outputs.push(OutputEntry { file: name.clone(), sha256: hex_digest(text.as_bytes()) });
    }
    let manifest = RunManifest {
        command: command_name(&cli.command).to_string(),
        config_digest: hex_digest(digest_input),
        seed: cli.seed,
        workers: cli.workers,
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_time_ms: start.elapsed().as_millis(),
        exit_code: code,
        outputs,
    };
    fs::write(dir.join("manifest.json"), to_json_line(&manifest) + "\n")?;
    println!("{}", dir.join("manifest.json").display());
    Ok(())
}
