use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netdecomp::workbench::experiment::{run_experiment, ExperimentConfig, ExperimentError, MetricsReport};
use serde_json::{json, Map, Value};

const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Network decomposition, ball carving and LLL experiments on simulated
/// CONGEST networks.
#[derive(Parser, Debug)]
#[command(name = "netdecomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build a network decomposition.
    Decompose(Flags),
    /// Run one ball-carving pass over all nodes.
    Carve(Flags),
    /// Solve an LLL instance (randomized resampling or the lambda solver).
    Lll(Flags),
    /// Pre-shattering followed by per-component derandomization.
    Pipeline(Flags),
    /// Check a decomposition or an assignment read from disk.
    Validate(Flags),
    /// Time a command per seed and print a CSV table.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Command to time.
    #[arg(long, value_enum, default_value = "carve")]
    task: Task,
    /// Timed repetitions per seed.
    #[arg(long, default_value_t = 1)]
    repeat: u32,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    Decompose,
    Carve,
    Lll,
    Pipeline,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Decompose => "decompose",
            Task::Carve => "carve",
            Task::Lll => "lll",
            Task::Pipeline => "pipeline",
        }
    }
}

/// Flags mirror the experiment config; keys present in `--config` win.
#[derive(Args, Debug, Default)]
struct Flags {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generated graph: regular:N:D:SEED, torus:W:H, path:N,
    /// er:N:P:MAXDEG:SEED or complete:N.
    #[arg(long, conflicts_with = "graph_file")]
    graph: Option<String>,
    /// Edge-list file.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// logn, few_colors, distance_k, fast, cps or lambda.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    x: Option<u64>,
    #[arg(long)]
    lambda: Option<usize>,
    /// Comma-separated seeds or a range A..B.
    #[arg(long)]
    seeds: Option<String>,
    /// Bits per edge per round.
    #[arg(long)]
    bandwidth: Option<u64>,
    /// congest or local.
    #[arg(long)]
    mode: Option<String>,
    /// Derandomizer enumeration budget.
    #[arg(long)]
    budget: Option<u64>,
    /// sinkless, rigged-single, rigged-double, rigged-cycle:N:SEED or
    /// synthetic:P:RANGE:PRIVATE.
    #[arg(long)]
    instance: Option<String>,
    /// strict or residual.
    #[arg(long)]
    gate: Option<String>,
    #[arg(long)]
    c_t: Option<u32>,
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Run the lambda solver even when p (e d)^lambda >= 1.
    #[arg(long)]
    no_enforce_criterion: bool,
    #[arg(long)]
    input_decomposition: Option<PathBuf>,
    #[arg(long)]
    input_instance: Option<PathBuf>,
    #[arg(long)]
    input_assignment: Option<PathBuf>,
    /// JSON report path; stdout otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out_decomposition: Option<PathBuf>,
    #[arg(long)]
    out_assignment: Option<PathBuf>,
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Stamp the report with the generation time.
    #[arg(long)]
    timestamps: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Internal(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(e) => Failure::Internal(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn parse_fields<const N: usize>(spec: &str, what: &str) -> Result<[String; N], Failure> {
    let parts: Vec<String> = spec.split(':').skip(1).map(str::to_string).collect();
    parts
        .try_into()
        .map_err(|_| Failure::Usage(format!("{what} {spec:?} needs {N} ':'-separated fields")))
}

fn num(s: &str) -> Result<Value, Failure> {
    if let Ok(i) = s.parse::<u64>() {
        return Ok(json!(i));
    }
    s.parse::<f64>()
        .map(|f| json!(f))
        .map_err(|_| Failure::Usage(format!("not a number: {s:?}")))
}

fn graph_spec(spec: &str) -> Result<Value, Failure> {
    let kind = spec.split(':').next().unwrap_or_default();
    Ok(match kind {
        "regular" => {
            let [n, d, seed] = parse_fields(spec, "graph")?;
            json!({"kind": "random_regular", "n": num(&n)?, "d": num(&d)?, "seed": num(&seed)?})
        }
        "torus" => {
            let [w, h] = parse_fields(spec, "graph")?;
            json!({"kind": "torus", "w": num(&w)?, "h": num(&h)?})
        }
        "path" => {
            let [n] = parse_fields(spec, "graph")?;
            json!({"kind": "path", "n": num(&n)?})
        }
        "complete" => {
            let [n] = parse_fields(spec, "graph")?;
            json!({"kind": "complete", "n": num(&n)?})
        }
        "er" => {
            let [n, p, cap, seed] = parse_fields(spec, "graph")?;
            let p: f64 = p.parse().map_err(|_| Failure::Usage(format!("bad edge probability {p:?}")))?;
            json!({"kind": "bounded_er", "n": num(&n)?, "p": p, "max_degree": num(&cap)?, "seed": num(&seed)?})
        }
        _ => return Err(Failure::Usage(format!("unknown graph kind {kind:?}"))),
    })
}

fn instance_spec(spec: &str) -> Result<Value, Failure> {
    let kind = spec.split(':').next().unwrap_or_default();
    Ok(match kind {
        "sinkless" => json!({"kind": "sinkless"}),
        "rigged-single" => json!({"kind": "rigged_single"}),
        "rigged-double" => json!({"kind": "rigged_double"}),
        "rigged-cycle" => {
            let [n, seed] = parse_fields(spec, "instance")?;
            json!({"kind": "rigged_cycle", "n": num(&n)?, "seed": num(&seed)?})
        }
        "synthetic" => {
            let [p, range, private] = parse_fields(spec, "instance")?;
            json!({"kind": "synthetic", "p": p, "range": num(&range)?, "private": num(&private)?})
        }
        _ => return Err(Failure::Usage(format!("unknown instance kind {kind:?}"))),
    })
}

fn seeds(spec: &str) -> Result<Value, Failure> {
    let bad = || Failure::Usage(format!("bad seed list {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok(json!((a..b).collect::<Vec<_>>()));
    }
    let list: Result<Vec<u64>, _> = spec.split(',').map(|s| s.trim().parse::<u64>()).collect();
    Ok(json!(list.map_err(|_| bad())?))
}

/// The config as a JSON object built from explicitly given flags only.
fn flags_object(command: &str, f: &Flags) -> Result<Map<String, Value>, Failure> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    if let Some(g) = &f.graph {
        m.insert("graph".into(), json!({ "generator": graph_spec(g)? }));
    }
    if let Some(p) = &f.graph_file {
        m.insert("graph".into(), json!({ "file": p }));
    }
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            m.insert(k.into(), v);
        }
    };
    put("algorithm", f.algorithm.as_ref().map(|a| json!(a)));
    put("k", f.k.map(|v| json!(v)));
    put("x", f.x.map(|v| json!(v)));
    put("lambda", f.lambda.map(|v| json!(v)));
    put("bandwidth", f.bandwidth.map(|v| json!(v)));
    put("mode", f.mode.as_ref().map(|v| json!(v)));
    put("budget", f.budget.map(|v| json!(v)));
    put("gate", f.gate.as_ref().map(|v| json!(v)));
    put("c_t", f.c_t.map(|v| json!(v)));
    put("max_iterations", f.max_iterations.map(|v| json!(v)));
    put("enforce_criterion", f.no_enforce_criterion.then(|| json!(false)));
    put("timestamps", f.timestamps.then(|| json!(true)));
    if let Some(s) = &f.seeds {
        m.insert("seeds".into(), seeds(s)?);
    }
    if let Some(s) = &f.instance {
        m.insert("instance".into(), instance_spec(s)?);
    }
    let object = |pairs: &[(&str, &Option<PathBuf>)]| {
        let o: Map<String, Value> = pairs
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|p| (k.to_string(), json!(p))))
            .collect();
        (!o.is_empty()).then_some(Value::Object(o))
    };
    if let Some(o) = object(&[
        ("decomposition", &f.input_decomposition),
        ("instance", &f.input_instance),
        ("assignment", &f.input_assignment),
    ]) {
        m.insert("inputs".into(), o);
    }
    if let Some(o) = object(&[
        ("report", &f.report),
        ("csv", &f.csv),
        ("decomposition", &f.out_decomposition),
        ("assignment", &f.out_assignment),
        ("audit", &f.audit),
    ]) {
        m.insert("output".into(), o);
    }
    Ok(m)
}

fn build_config(command: &str, f: &Flags) -> Result<ExperimentConfig, Failure> {
    let mut m = flags_object(command, f)?;
    if let Some(path) = &f.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let Value::Object(file) = file else {
            return Err(Failure::Usage(format!("{}: config must be a JSON object", path.display())));
        };
        if let Some(c) = file.get("command") {
            if c != &json!(command) {
                return Err(Failure::Usage(format!("config command {c} does not match subcommand {command:?}")));
            }
        }
        for (k, v) in file {
            m.insert(k, v);
        }
    }
    if !m.contains_key("graph") {
        return Err(Failure::Usage("no graph: pass --graph, --graph-file or a config with \"graph\"".into()));
    }
    Ok(ExperimentConfig::from_json_str(&Value::Object(m).to_string())?)
}

fn summary(r: &MetricsReport) -> String {
    let mut failed: Vec<String> = r
        .aggregates
        .failed_checks
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(k, c)| format!("{k} ({c})"))
        .collect();
    failed.extend(r.runs.iter().filter_map(|x| x.error.as_ref().map(|e| format!("seed {}: {}", x.seed, e.message))));
    let status = if r.passed { "PASS" } else { "FAIL" };
    let mut s = format!("{status}: {}/{} runs passed, max rounds {}", r.aggregates.passed_runs, r.aggregates.runs, r.aggregates.max_rounds);
    if !failed.is_empty() {
        s.push_str("; failed: ");
        s.push_str(&failed.join(", "));
    }
    s
}

fn run_command(command: &str, f: &Flags) -> Result<u8, Failure> {
    let cfg = build_config(command, f)?;
    let report = run_experiment(&cfg)?;
    if cfg.output.report.is_none() {
        print!("{}", report.to_json_string());
    }
    eprintln!("{}", summary(&report));
    Ok(report.exit_code() as u8)
}

fn bench(b: &BenchArgs) -> Result<u8, Failure> {
    let base = build_config(b.task.name(), &b.flags)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task", "seed", "repeat", "n", "m", "rounds", "passed", "millis"])
        .map_err(|e| Failure::Internal(e.to_string()))?;
    let mut code = 0;
    for &seed in &base.seeds {
        let mut cfg = base.clone();
        cfg.seeds = vec![seed];
        cfg.output = Default::default();
        for rep in 0..b.repeat {
            let t = Instant::now();
            let report = run_experiment(&cfg)?;
            let millis = t.elapsed().as_secs_f64() * 1e3;
            code = code.max(report.exit_code() as u8);
            let run = &report.runs[0];
            w.write_record([
                b.task.name().to_string(),
                seed.to_string(),
                rep.to_string(),
                run.n.to_string(),
                run.m.to_string(),
                run.rounds.to_string(),
                run.passed().to_string(),
                format!("{millis:.3}"),
            ])
            .map_err(|e| Failure::Internal(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Internal(e.to_string()))?;
    match &base.output.csv {
        Some(p) => std::fs::write(p, &bytes).map_err(|e| Failure::Internal(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| Failure::Internal(e.to_string()))?,
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Cmd::Decompose(f) => run_command("decompose", f),
        Cmd::Carve(f) => run_command("carve", f),
        Cmd::Lll(f) => run_command("lll", f),
        Cmd::Pipeline(f) => run_command("pipeline", f),
        Cmd::Validate(f) => run_command("validate", f),
        Cmd::Bench(b) => bench(b),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
