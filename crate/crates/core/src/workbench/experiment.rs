//! Experiment configuration, dispatch and metrics reports.
//!
//! A config names a command, a graph source and per-command parameters and
//! runs once per seed. For generated graphs with a seed the run's graph seed
//! is `spec seed + run seed`; the run seed also seeds the engine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carving::{carve_distance_k, carve_fast, CarveParamsC, CarveParamsE, CarveResult};
use crate::cluster::validate_collection;
use crate::decomposition::{decompose_few_colors, decompose_logn, validate_decomposition, NetworkDecomposition};
use crate::derandomizer::{audit_json_lines, local_lambda_lll, solve_range_bounded_lll, CriterionGate, DerandError, PipelineConfig, DEFAULT_BUDGET};
use crate::engine::SimConfig;
use crate::graph::{load_graph, Graph};
use crate::lll::cps::{cps_bandwidth, cps_solve, CpsConfig};
use crate::lll::{validate_assignment, LllError, LllInstance};
use crate::math::log2_ceil;
use crate::workbench::generators::{generate_graph, GraphSpec};
use crate::workbench::instances::{make_instance, InstanceKind};

/// JSON schema of [`ExperimentConfig`].
pub const EXPERIMENT_SCHEMA: &str = include_str!("../../schema/experiment.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Decompose,
    Carve,
    Lll,
    Pipeline,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// `decompose`: `O(log n)` colors by distance-`k` carving.
    Logn,
    /// `decompose`: `lambda` colors.
    FewColors,
    /// `carve`: distance-`k` carving.
    DistanceK,
    /// `carve`: levels-and-tokens carving, `k = 1` only.
    Fast,
    /// `lll`: randomized resampling.
    Cps,
    /// `lll`: the deterministic `lambda`-color LOCAL solver.
    Lambda,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Congest,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Generator(GraphSpec),
    File(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Decomposition JSON to validate.
    pub decomposition: Option<PathBuf>,
    /// Instance JSON; otherwise `instance` is built on the graph.
    pub instance: Option<PathBuf>,
    /// JSON array of variable values to validate.
    pub assignment: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    /// Per-phase (carving) or per-class (decomposition) table.
    pub csv: Option<PathBuf>,
    pub decomposition: Option<PathBuf>,
    pub assignment: Option<PathBuf>,
    /// Derandomizer audit, JSON lines.
    pub audit: Option<PathBuf>,
}

fn default_k() -> usize {
    1
}

fn default_x() -> u64 {
    2
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_c_t() -> u32 {
    4
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub graph: GraphSource,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_x")]
    pub x: u64,
    #[serde(default)]
    pub lambda: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// CONGEST bits per edge per round; a per-command default otherwise.
    #[serde(default)]
    pub bandwidth: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    /// Derandomizer enumeration budget.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub instance: Option<InstanceKind>,
    #[serde(default)]
    pub gate: Option<CriterionGate>,
    #[serde(default = "default_c_t")]
    pub c_t: u32,
    #[serde(default)]
    pub max_iterations: Option<u64>,
    /// `lambda` solver: refuse instances failing `p (e d)^lambda < 1`.
    #[serde(default = "default_true")]
    pub enforce_criterion: bool,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub output: Outputs,
    #[serde(default)]
    pub timestamps: bool,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("input {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentConfig {
    pub fn new(command: Command, graph: GraphSource) -> Self {
        ExperimentConfig {
            command,
            graph,
            algorithm: None,
            k: default_k(),
            x: default_x(),
            lambda: None,
            seeds: default_seeds(),
            bandwidth: None,
            mode: Mode::Congest,
            budget: None,
            instance: None,
            gate: None,
            c_t: default_c_t(),
            max_iterations: None,
            enforce_criterion: true,
            inputs: Inputs::default(),
            output: Outputs::default(),
            timestamps: false,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn algorithm(&self) -> Option<Algorithm> {
        self.algorithm.or(match self.command {
            Command::Decompose => Some(Algorithm::Logn),
            Command::Carve => Some(Algorithm::DistanceK),
            Command::Lll => Some(Algorithm::Cps),
            Command::Pipeline | Command::Validate => None,
        })
    }

    /// Checks the constraints the schema cannot express.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.x < 2 {
            return bad("x must be at least 2");
        }
        if self.bandwidth == Some(0) {
            return bad("bandwidth must be positive");
        }
        if self.budget == Some(0) {
            return bad("budget must be positive");
        }
        let alg = self.algorithm();
        let fits = match (self.command, alg) {
            (Command::Decompose, Some(Algorithm::Logn | Algorithm::FewColors)) => true,
            (Command::Carve, Some(Algorithm::DistanceK | Algorithm::Fast)) => true,
            (Command::Lll, Some(Algorithm::Cps | Algorithm::Lambda)) => true,
            (Command::Pipeline | Command::Validate, None) => true,
            _ => false,
        };
        if !fits {
            return Err(ExperimentError::Config(format!(
                "algorithm {alg:?} does not apply to command {:?}",
                self.command
            )));
        }
        if matches!(alg, Some(Algorithm::FewColors | Algorithm::Lambda)) && self.lambda.unwrap_or(0) == 0 {
            return bad("lambda must be a positive integer for this algorithm");
        }
        if alg == Some(Algorithm::Fast) && self.k != 1 {
            return bad("fast carving needs k = 1");
        }
        if self.command == Command::Validate && self.inputs.decomposition.is_none() && self.inputs.assignment.is_none() {
            return bad("validate needs inputs.decomposition or inputs.assignment");
        }
        Ok(())
    }

    fn sim(&self, default_bits: u64, seed: u64) -> SimConfig {
        match self.mode {
            Mode::Local => SimConfig::local(),
            Mode::Congest => SimConfig::congest(self.bandwidth.unwrap_or(default_bits).max(1)),
        }
        .with_seed(seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The algorithm refused or an asserted guarantee broke.
    Guarantee,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditSummary {
    pub steps: usize,
    pub non_increasing: bool,
    pub below_one: bool,
    pub max_global: String,
    pub final_global: String,
}

/// One row of the phase table.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PhaseRow {
    pub seed: u64,
    pub stage: &'static str,
    pub index: u64,
    pub clusters: usize,
    pub nodes: Option<usize>,
    pub max_component: Option<usize>,
    pub dead: Option<usize>,
    pub max_radius: Option<usize>,
    pub max_congestion: Option<usize>,
    pub steps_run: Option<u64>,
    pub tokens_created: Option<u64>,
    pub beta: Option<usize>,
    pub kappa: Option<usize>,
    pub rounds: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub rounds: u64,
    pub beta: Option<usize>,
    pub kappa: Option<usize>,
    pub clustered_fraction: Option<f64>,
    pub dead: Option<usize>,
    pub colors: Option<usize>,
    pub residual_components: Vec<usize>,
    pub violated: Option<usize>,
    pub iterations: Option<u64>,
    pub audit: Option<AuditSummary>,
    /// One entry per asserted guarantee.
    pub checks: BTreeMap<String, bool>,
    pub error: Option<RunError>,
    #[serde(skip)]
    pub phases: Vec<PhaseRow>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.values().all(|&b| b)
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.insert(name.to_string(), ok);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregates {
    pub runs: usize,
    pub passed_runs: usize,
    pub max_rounds: u64,
    pub mean_rounds: f64,
    pub max_beta: Option<usize>,
    pub max_kappa: Option<usize>,
    pub max_colors: Option<usize>,
    pub max_residual_component: Option<usize>,
    pub total_violated: usize,
    /// Per check, the number of runs in which it failed.
    pub failed_checks: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub command: Command,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub aggregates: Aggregates,
    pub passed: bool,
    /// Seconds since the Unix epoch, only with `timestamps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

impl MetricsReport {
    fn new(config: &ExperimentConfig, runs: Vec<RunRecord>) -> Self {
        let mut a = Aggregates {
            runs: runs.len(),
            passed_runs: runs.iter().filter(|r| r.passed()).count(),
            ..Default::default()
        };
        for r in &runs {
            a.max_rounds = a.max_rounds.max(r.rounds);
            a.mean_rounds += r.rounds as f64 / runs.len() as f64;
            a.max_beta = a.max_beta.max(r.beta);
            a.max_kappa = a.max_kappa.max(r.kappa);
            a.max_colors = a.max_colors.max(r.colors);
            a.max_residual_component = a.max_residual_component.max(r.residual_components.iter().copied().max());
            a.total_violated += r.violated.unwrap_or(0);
            for (name, &ok) in &r.checks {
                *a.failed_checks.entry(name.clone()).or_default() += usize::from(!ok);
            }
        }
        let generated_at = config.timestamps.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        });
        MetricsReport {
            command: config.command,
            config: config.clone(),
            passed: a.passed_runs == a.runs,
            aggregates: a,
            runs,
            generated_at,
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Exit status: 0 all guarantees held, 1 some failed, 3 internal error.
    pub fn exit_code(&self) -> i32 {
        if self.runs.iter().any(|r| r.error.as_ref().is_some_and(|e| e.kind == ErrorKind::Internal)) {
            3
        } else if self.passed {
            0
        } else {
            1
        }
    }

    pub fn phase_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut any = false;
        for r in &self.runs {
            for p in &r.phases {
                w.serialize(p)?;
                any = true;
            }
        }
        if !any {
            w.write_record(["seed", "stage", "index"])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_err(path, e))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    ExperimentConfig::from_json_str(&text)
}

/// The graph of the run with seed `seed`.
pub fn graph_for_seed(src: &GraphSource, seed: u64) -> Result<Graph, ExperimentError> {
    match src {
        GraphSource::File(p) => load_graph(p).map_err(|e| input_err(p, e)),
        GraphSource::Generator(spec) => {
            let mut spec = spec.clone();
            match &mut spec {
                GraphSpec::RandomRegular { seed: s, .. } | GraphSpec::BoundedEr { seed: s, .. } => *s = s.wrapping_add(seed),
                _ => {}
            }
            generate_graph(&spec).map_err(|e| ExperimentError::Config(e.to_string()))
        }
    }
}

fn seeded_path(path: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}.seed{seed}.{ext}"),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn lll_error_kind(e: &LllError) -> ErrorKind {
    match e {
        LllError::Engine(_) | LllError::Json(_) | LllError::Invalid(_) => ErrorKind::Internal,
        _ => ErrorKind::Guarantee,
    }
}

fn derand_error_kind(e: &DerandError) -> ErrorKind {
    match e {
        DerandError::Lll(l) => lll_error_kind(l),
        DerandError::Decomposition(_) | DerandError::Cluster(_) => ErrorKind::Internal,
        _ => ErrorKind::Guarantee,
    }
}

fn fail(kind: ErrorKind, e: impl std::fmt::Display) -> RunError {
    RunError {
        kind,
        message: e.to_string(),
    }
}

/// Runs `cfg` once per seed, writes the configured outputs and returns the
/// report. Algorithm failures are recorded in the report; only unusable
/// configs and inputs are errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, ExperimentError> {
    cfg.validate()?;
    let many = cfg.seeds.len() > 1;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for chunk in cfg.seeds.chunks(workers) {
        let done: Vec<Result<RunRecord, ExperimentError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run_seed(cfg, seed, many))).collect();
            handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
        });
        for r in done {
            runs.push(r?);
        }
    }
    let report = MetricsReport::new(cfg, runs);
    if let Some(p) = &cfg.output.report {
        std::fs::write(p, report.to_json_string())?;
    }
    if let Some(p) = &cfg.output.csv {
        std::fs::write(p, report.phase_csv().map_err(|e| ExperimentError::Config(e.to_string()))?)?;
    }
    Ok(report)
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, many: bool) -> Result<RunRecord, ExperimentError> {
    let g = graph_for_seed(&cfg.graph, seed)?;
    let mut rec = RunRecord {
        seed,
        n: g.n(),
        m: g.m(),
        ..Default::default()
    };
    match cfg.command {
        Command::Carve => run_carve(cfg, &g, &mut rec),
        Command::Decompose => {
            if let Some(nd) = run_decompose(cfg, &g, &mut rec) {
                if let Some(p) = &cfg.output.decomposition {
                    std::fs::write(seeded_path(p, seed, many), serde_json::to_string_pretty(&nd.to_json()).expect("json"))?;
                }
            }
        }
        Command::Lll | Command::Pipeline => {
            let inst = instance_for(cfg, &g)?;
            let (values, audit) = if cfg.command == Command::Lll {
                (run_lll(cfg, &g, &inst, &mut rec), None)
            } else {
                run_pipeline(cfg, &inst, &mut rec)
            };
            if let (Some(v), Some(p)) = (&values, &cfg.output.assignment) {
                std::fs::write(seeded_path(p, seed, many), serde_json::to_string(v).expect("json"))?;
            }
            if let (Some(a), Some(p)) = (&audit, &cfg.output.audit) {
                std::fs::write(seeded_path(p, seed, many), a)?;
            }
        }
        Command::Validate => run_validate(cfg, &g, &mut rec)?,
    }
    Ok(rec)
}

fn instance_for(cfg: &ExperimentConfig, g: &Graph) -> Result<LllInstance, ExperimentError> {
    if let Some(p) = &cfg.inputs.instance {
        return LllInstance::from_json(&read_json(p)?).map_err(|e| input_err(p, e));
    }
    make_instance(cfg.instance.as_ref().unwrap_or(&InstanceKind::Sinkless), g).map_err(|e| ExperimentError::Config(e.to_string()))
}

fn run_carve(cfg: &ExperimentConfig, g: &Graph, rec: &mut RunRecord) {
    let all: Vec<usize> = (0..g.n()).collect();
    let sim = cfg.sim(crate::engine::default_bandwidth(g), rec.seed);
    let fast = cfg.algorithm() == Some(Algorithm::Fast);
    let res: Result<CarveResult, _> = if fast {
        carve_fast(g, &all, cfg.x, None, &sim)
    } else {
        carve_distance_k(g, &all, cfg.k, cfg.x, None, &sim)
    };
    let r = match res {
        Ok(r) => r,
        Err(e) => {
            rec.error = Some(fail(ErrorKind::Internal, e));
            return;
        }
    };
    let (beta_bound, kappa_bound) = if fast {
        let p = CarveParamsC::new(g.n(), cfg.x);
        (p.phases * p.steps, 4 * p.phases)
    } else {
        let p = CarveParamsE::new(g.n(), cfg.x, cfg.k);
        (p.beta_bound, p.kappa_bound)
    };
    rec.rounds = r.rounds();
    rec.dead = Some(r.dead.len());
    let clustered = r.collection.clustered();
    rec.clustered_fraction = Some(if g.n() == 0 { 1.0 } else { clustered as f64 / g.n() as f64 });
    rec.check("clustered_fraction", clustered as u64 * cfg.x >= (cfg.x - 1) * g.n() as u64);
    match validate_collection(g, &r.collection) {
        Ok(st) => {
            rec.beta = Some(st.beta);
            rec.kappa = Some(st.kappa);
            rec.check("separation", st.min_cluster_distance.is_none_or(|d| d as usize > cfg.k));
            rec.check("beta_bound", st.beta as u64 <= beta_bound);
            rec.check("kappa_bound", st.kappa as u64 <= kappa_bound);
        }
        Err(e) => rec.error = Some(fail(ErrorKind::Guarantee, e)),
    }
    if fast {
        rec.check("potential_monotone", r.potential_violations == 0);
        rec.check("all_at_top", r.below_top == 0);
    } else {
        rec.check("component_bound", r.phases.iter().all(|p| p.component_bound_ok));
    }
    rec.phases = r
        .phases
        .iter()
        .map(|p| PhaseRow {
            seed: rec.seed,
            stage: "phase",
            index: p.phase,
            clusters: p.clusters,
            max_component: Some(p.max_component),
            dead: Some(p.dead),
            max_radius: Some(p.max_radius),
            max_congestion: Some(p.max_congestion),
            steps_run: Some(p.steps_run),
            tokens_created: Some(p.tokens_created),
            ..Default::default()
        })
        .collect();
}

fn run_decompose(cfg: &ExperimentConfig, g: &Graph, rec: &mut RunRecord) -> Option<NetworkDecomposition> {
    let sim = cfg.sim(crate::engine::default_bandwidth(g), rec.seed);
    let (res, bound) = match cfg.algorithm() {
        Some(Algorithm::FewColors) => {
            let l = cfg.lambda.unwrap_or(1);
            (decompose_few_colors(g, l, cfg.k, &sim), l)
        }
        _ => (decompose_logn(g, cfg.k, &sim), log2_ceil(g.n()) as usize + 1),
    };
    let nd = match res {
        Ok(nd) => nd,
        Err(e) => {
            rec.error = Some(fail(ErrorKind::Guarantee, e));
            return None;
        }
    };
    rec.rounds = nd.rounds();
    rec.colors = Some(nd.colors());
    rec.check("colors_bound", nd.colors() <= bound);
    match validate_decomposition(g, &nd) {
        Ok(rep) => {
            rec.beta = Some(rep.max_beta);
            rec.kappa = Some(rep.max_kappa);
            rec.check("valid", true);
        }
        Err(e) => {
            rec.check("valid", false);
            rec.error = Some(fail(ErrorKind::Guarantee, e));
        }
    }
    rec.phases = nd
        .stats
        .iter()
        .enumerate()
        .map(|(i, s)| PhaseRow {
            seed: rec.seed,
            stage: "class",
            index: i as u64,
            clusters: s.clusters,
            nodes: Some(s.nodes),
            dead: Some(s.residue),
            beta: Some(s.beta),
            kappa: Some(s.kappa),
            rounds: Some(s.rounds),
            ..Default::default()
        })
        .collect();
    Some(nd)
}

fn run_lll(cfg: &ExperimentConfig, g: &Graph, inst: &LllInstance, rec: &mut RunRecord) -> Option<Vec<u32>> {
    let n = inst.num_events();
    match cfg.algorithm() {
        Some(Algorithm::Lambda) => {
            let sim = cfg.sim(crate::engine::default_bandwidth(g), rec.seed);
            match local_lambda_lll(inst, cfg.lambda.unwrap_or(1), cfg.enforce_criterion, &sim) {
                Ok(out) => {
                    rec.rounds = out.rounds;
                    rec.colors = Some(out.colors);
                    rec.violated = Some(0);
                    rec.check("valid", true);
                    let one = BigRational::one();
                    rec.check("audit_below_one", out.audit.iter().all(|s| *s < one));
                    rec.audit = Some(summarize(&out.audit));
                    Some(out.values)
                }
                Err(e) => {
                    rec.error = Some(fail(derand_error_kind(&e), e));
                    None
                }
            }
        }
        _ => {
            let limit = 10 * log2_ceil(n).max(1) as u64;
            let max_iterations = cfg.max_iterations.unwrap_or(limit);
            let mut sim = cfg.sim(cps_bandwidth(n).max(1), rec.seed);
            sim.max_rounds = sim.max_rounds.max(3 * max_iterations + 3);
            match cps_solve(inst, &CpsConfig { sim, max_iterations }) {
                Ok(r) => {
                    rec.rounds = r.metrics.rounds;
                    rec.iterations = Some(r.iterations);
                    rec.violated = Some(r.violated.len());
                    rec.check("valid", r.success());
                    rec.check("iterations_bound", r.iterations <= limit);
                    Some(r.values)
                }
                Err(e) => {
                    rec.error = Some(fail(lll_error_kind(&e), e));
                    None
                }
            }
        }
    }
}

fn summarize(globals: &[BigRational]) -> AuditSummary {
    let one = BigRational::one();
    AuditSummary {
        steps: globals.len(),
        non_increasing: globals.windows(2).all(|w| w[1] <= w[0]),
        below_one: globals.iter().all(|g| *g < one),
        max_global: globals.iter().max().map_or("0".into(), |g| g.to_string()),
        final_global: globals.last().map_or("0".into(), |g| g.to_string()),
    }
}

fn run_pipeline(cfg: &ExperimentConfig, inst: &LllInstance, rec: &mut RunRecord) -> (Option<Vec<u32>>, Option<String>) {
    let pc = PipelineConfig {
        seed: rec.seed,
        gate: cfg.gate.unwrap_or(CriterionGate::Strict),
        c_t: cfg.c_t,
        budget: cfg.budget.unwrap_or(DEFAULT_BUDGET),
    };
    match solve_range_bounded_lll(inst, &pc) {
        Ok(out) => {
            rec.rounds = out.rounds();
            rec.residual_components = out.residual_components.clone();
            rec.violated = Some(out.violated.len());
            rec.check("valid", out.violated.is_empty());
            rec.check("preshatter", out.preshatter.passed());
            let mut audit = String::new();
            let mut steps = 0;
            let mut non_increasing = true;
            let mut below_one = true;
            let mut max_global: Option<BigRational> = None;
            for c in &out.deterministic.components {
                let mut last = c.initial_expectation.clone();
                for a in &c.audit {
                    non_increasing &= a.after <= a.before && a.global <= last;
                    below_one &= a.global < BigRational::one();
                    last = a.global.clone();
                }
                steps += c.audit.len();
                max_global = max_global.max(Some(c.initial_expectation.clone()));
                audit.push_str(&audit_json_lines(&c.audit));
            }
            rec.check("audit_non_increasing", non_increasing);
            rec.check("audit_below_one", below_one);
            rec.audit = Some(AuditSummary {
                steps,
                non_increasing,
                below_one,
                max_global: max_global.map_or("0".into(), |g| g.to_string()),
                final_global: "0".into(),
            });
            (Some(out.values), Some(audit))
        }
        Err(e) => {
            rec.error = Some(fail(derand_error_kind(&e), e));
            (None, None)
        }
    }
}

fn run_validate(cfg: &ExperimentConfig, g: &Graph, rec: &mut RunRecord) -> Result<(), ExperimentError> {
    if let Some(p) = &cfg.inputs.decomposition {
        let nd = NetworkDecomposition::from_json(g, &read_json(p)?).map_err(|e| input_err(p, e))?;
        rec.colors = Some(nd.colors());
        match validate_decomposition(g, &nd) {
            Ok(rep) => {
                rec.beta = Some(rep.max_beta);
                rec.kappa = Some(rep.max_kappa);
                rec.check("decomposition_valid", true);
            }
            Err(e) => {
                rec.check("decomposition_valid", false);
                rec.error = Some(fail(ErrorKind::Guarantee, e));
            }
        }
    }
    if let Some(p) = &cfg.inputs.assignment {
        let inst = instance_for(cfg, g)?;
        let values: Vec<u32> = serde_json::from_value(read_json(p)?).map_err(|e| input_err(p, e))?;
        if values.len() != inst.num_vars() {
            return Err(input_err(p, format!("{} values for {} variables", values.len(), inst.num_vars())));
        }
        let values: Vec<Option<u32>> = values.into_iter().map(Some).collect();
        match validate_assignment(&inst, &values) {
            Ok(v) => {
                rec.violated = Some(v.len());
                rec.check("assignment_valid", v.is_empty());
            }
            Err(e) => {
                rec.check("assignment_valid", false);
                rec.error = Some(fail(ErrorKind::Guarantee, e));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regular(n: usize, d: usize) -> GraphSource {
        GraphSource::Generator(GraphSpec::RandomRegular { n, d, seed: 1 })
    }

    #[test]
    fn schema_lists_every_field() {
        let schema: serde_json::Value = serde_json::from_str(EXPERIMENT_SCHEMA).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let cfg = serde_json::to_value(ExperimentConfig::new(Command::Carve, regular(8, 3))).unwrap();
        let fields = cfg.as_object().unwrap();
        let mut a: Vec<_> = props.keys().collect();
        let mut b: Vec<_> = fields.keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        assert!(ExperimentConfig::from_json_str("{").is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"command":"carve"}"#).is_err());
        let ok = r#"{"command":"carve","graph":{"generator":{"kind":"path","n":3}}}"#;
        assert_eq!(ExperimentConfig::from_json_str(ok).unwrap().algorithm(), Some(Algorithm::DistanceK));
        let extra = r#"{"command":"carve","graph":{"generator":{"kind":"path","n":3}},"colour":1}"#;
        assert!(ExperimentConfig::from_json_str(extra).is_err());
        let wrong = r#"{"command":"carve","algorithm":"cps","graph":{"file":"g.txt"}}"#;
        assert!(matches!(ExperimentConfig::from_json_str(wrong), Err(ExperimentError::Config(_))));
        let no_lambda = r#"{"command":"decompose","algorithm":"few_colors","graph":{"file":"g.txt"}}"#;
        assert!(ExperimentConfig::from_json_str(no_lambda).is_err());
    }

    #[test]
    fn carve_report() {
        let mut cfg = ExperimentConfig::new(Command::Carve, regular(256, 4));
        cfg.seeds = vec![0, 1];
        let rep = run_experiment(&cfg).unwrap();
        assert!(rep.passed, "{}", rep.to_json_string());
        assert_eq!(rep.exit_code(), 0);
        assert!(rep.runs.iter().all(|r| r.clustered_fraction.unwrap() >= 0.5));
        let csv = rep.phase_csv().unwrap();
        assert!(csv.starts_with("seed,stage,index,clusters"));
        assert_eq!(csv.lines().count(), 1 + rep.runs.iter().map(|r| r.phases.len()).sum::<usize>());
        // byte-for-byte reproducible without timestamps
        assert_eq!(run_experiment(&cfg).unwrap().to_json_string(), rep.to_json_string());
    }

    #[test]
    fn decompose_then_validate() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(Command::Decompose, regular(64, 4));
        cfg.output.decomposition = Some(dir.path().join("nd.json"));
        assert!(run_experiment(&cfg).unwrap().passed);
        let mut v = ExperimentConfig::new(Command::Validate, regular(64, 4));
        v.inputs.decomposition = cfg.output.decomposition.clone();
        assert!(run_experiment(&v).unwrap().passed);
        // against a different graph the partition cannot be valid
        let mut other = v.clone();
        other.graph = regular(64, 6);
        let rep = run_experiment(&other).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.exit_code(), 1);
    }

    #[test]
    fn lll_and_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(Command::Lll, regular(64, 6));
        cfg.output.assignment = Some(dir.path().join("a.json"));
        let rep = run_experiment(&cfg).unwrap();
        assert!(rep.passed);
        let mut v = ExperimentConfig::new(Command::Validate, regular(64, 6));
        v.inputs.assignment = cfg.output.assignment.clone();
        assert_eq!(run_experiment(&v).unwrap().runs[0].violated, Some(0));

        let mut p = ExperimentConfig::new(Command::Pipeline, regular(128, 10));
        let refused = run_experiment(&p).unwrap();
        assert_eq!(refused.runs[0].error.as_ref().unwrap().kind, ErrorKind::Guarantee);
        p.gate = Some(CriterionGate::Residual);
        p.output.audit = Some(dir.path().join("audit.jsonl"));
        let rep = run_experiment(&p).unwrap();
        assert!(rep.passed, "{}", rep.to_json_string());
        let audit = std::fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
        assert_eq!(audit.lines().count(), rep.runs[0].audit.as_ref().unwrap().steps);
    }
}
