//! Argument definitions, dispatch, and report emission.
//!
//! Every command resolves its configuration in three layers — built-in
//! defaults, the optional `--config` JSON file, then flags — runs one
//! library engine, and wraps the outcome in a versioned envelope:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "timestamp": "unix:...",   // the only field excluded from
//!                              // byte-for-byte reproducibility
//!   "command": "certify",
//!   "config": { ... },         // the merged configuration that ran
//!   "report": { ... }          // engine-specific payload
//! }
//! ```
//!
//! The envelope goes to standard output, or to `<out>/report.json` with
//! any CSV series next to it when `--out` is given.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use finlyap_core::certify::{
    bendixson, certify_lmi, certify_measure, certify_region, lasalle, AlphaMode, MeasureNorm,
    QSpec, SamplingPlan, Verdict,
};
use finlyap_core::distance::{empirical_decay, finsler_distance, pseudo_distance};
use finlyap_core::dynamics::{make_builtin, CatalogParams, Region, System};
use finlyap_core::experiments::{run_scenario, scenario_names, scenarios, ScenarioOverrides};
use finlyap_core::finsler::{make_metric, property_suite, FinslerLyapunov};
use finlyap_core::geometry::CoordinateSpace;

use crate::config::RunConfig;
use crate::parse::{
    parse_index_list, parse_matrix, parse_matrix_params, parse_region, parse_scalar_params,
    parse_vector, to_dmatrix,
};

const SCHEMA_VERSION: u32 = 1;

/// Failures that end the process with exit code 3.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed literals, schema violations, unknown names.
    Usage(String),
    /// An engine or the filesystem refused the otherwise valid request.
    Failure(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Failure(msg) => write!(f, "{msg}"),
        }
    }
}

fn failure<E: fmt::Display>(e: E) -> CliError {
    CliError::Failure(e.to_string())
}

// --- command line ----------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "finlyap",
    version,
    about = "Certify contraction of ODE systems, measure induced distances, and reproduce the worked examples.",
    after_help = "Exit codes: 0 certified/pass, 1 counterexample/fail, 2 inconclusive, 3 usage or config error."
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write report.json plus CSV series here instead of printing JSON to
    /// standard output.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for multi-run commands (default: FINSLER_THREADS,
    /// then available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for all sampled randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a contraction inequality over a region (pointwise metric,
    /// matrix-measure, or matrix-inequality engine).
    Certify(CertifyArgs),
    /// Invariance-principle certification: pointwise audit plus probe
    /// trajectories whose displacements must collapse.
    Lasalle(LasalleArgs),
    /// Exclude periodic orbits by certifying decay along the flow
    /// direction.
    Bendixson(BendixsonArgs),
    /// Shortest-curve induced distance between two states.
    Distance(DistanceArgs),
    /// Integrate two solutions and fit the decay rate of their distance.
    Decay(DecayArgs),
    /// Run a named worked-example scenario (or --all, or --list).
    Scenario(ScenarioArgs),
    /// Audit the norm-like properties of a metric by sampling.
    Props(PropsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Certify(_) => "certify",
            Command::Lasalle(_) => "lasalle",
            Command::Bendixson(_) => "bendixson",
            Command::Distance(_) => "distance",
            Command::Decay(_) => "decay",
            Command::Scenario(_) => "scenario",
            Command::Props(_) => "props",
        }
    }
}

#[derive(Args, Default)]
struct SystemFlags {
    /// Catalog system: sine_oscillator, boost_converter, consensus,
    /// kuramoto, linear, or harmonic.
    #[arg(long)]
    system: Option<String>,
    /// Scalar system parameter; repeatable.
    #[arg(long = "system-param", value_name = "KEY=VALUE")]
    system_param: Vec<String>,
    /// Matrix system parameter with rows separated by ';'; repeatable.
    #[arg(long = "system-matrix", value_name = "KEY=R11,R12;R21,R22")]
    system_matrix: Vec<String>,
}

impl SystemFlags {
    fn fill(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(name) = &self.system {
            cfg.system = Some(name.clone());
        }
        cfg.system_params
            .extend(parse_scalar_params(&self.system_param).map_err(CliError::Usage)?);
        cfg.system_matrices
            .extend(parse_matrix_params(&self.system_matrix).map_err(CliError::Usage)?);
        Ok(())
    }
}

#[derive(Args, Default)]
struct MetricFlags {
    /// Catalog metric: quadratic, riemannian, knorm, oscillator_v2,
    /// consensus_maxmin, kuramoto_centroid, pi_quadratic, or
    /// broken_two_exponent.
    #[arg(long)]
    metric: Option<String>,
    /// Scalar metric parameter; repeatable.
    #[arg(long = "metric-param", value_name = "KEY=VALUE")]
    metric_param: Vec<String>,
    /// Matrix metric parameter with rows separated by ';'; repeatable.
    #[arg(long = "metric-matrix", value_name = "KEY=R11,R12;R21,R22")]
    metric_matrix: Vec<String>,
}

impl MetricFlags {
    fn fill(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(name) = &self.metric {
            cfg.metric = Some(name.clone());
        }
        cfg.metric_params
            .extend(parse_scalar_params(&self.metric_param).map_err(CliError::Usage)?);
        cfg.metric_matrices
            .extend(parse_matrix_params(&self.metric_matrix).map_err(CliError::Usage)?);
        Ok(())
    }
}

#[derive(Args, Default)]
struct RegionFlags {
    /// Analysis region: "[a,b]" for every coordinate, "[a,b]x[c,d]" per
    /// coordinate, or "ball:R".
    #[arg(long)]
    region: Option<String>,
}

impl RegionFlags {
    fn fill(&self, cfg: &mut RunConfig) {
        if let Some(region) = &self.region {
            cfg.region = Some(region.clone());
        }
    }
}

#[derive(Args, Default)]
struct PlanFlags {
    /// Grid resolution per coordinate, endpoints included (default 5).
    #[arg(long)]
    grid: Option<usize>,
    /// Extra uniform random states inside the region (default 128).
    #[arg(long)]
    random: Option<usize>,
    /// Random displacement directions per state (default 8).
    #[arg(long = "delta-samples")]
    delta_samples: Option<usize>,
    /// Evaluation times, comma separated (default "0").
    #[arg(long, value_name = "T1,T2,...")]
    times: Option<String>,
}

impl PlanFlags {
    fn fill(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if self.grid.is_some() {
            cfg.grid = self.grid;
        }
        if self.random.is_some() {
            cfg.random = self.random;
        }
        if self.delta_samples.is_some() {
            cfg.delta_samples = self.delta_samples;
        }
        if let Some(times) = &self.times {
            cfg.times = Some(parse_vector(times).map_err(CliError::Usage)?);
        }
        Ok(())
    }
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    system: SystemFlags,
    #[command(flatten)]
    metric: MetricFlags,
    #[command(flatten)]
    region: RegionFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Engine: region (pointwise metric), measure (matrix measure), or
    /// lmi (quadratic-metric matrix inequality). Default region.
    #[arg(long)]
    engine: Option<String>,
    /// Required behavior for the region engine: is (non-expansion), ias
    /// (strict class-K decay), or ies (exponential). Default ies.
    #[arg(long)]
    mode: Option<String>,
    /// Decay-rate threshold for ies (and the class-K slope for ias);
    /// default 1e-6.
    #[arg(long = "rate-min")]
    rate_min: Option<f64>,
    /// Norm for the measure engine: one, two, or inf. Default two.
    #[arg(long)]
    norm: Option<String>,
    /// Required measure margin for the measure engine; default 1e-6.
    #[arg(long = "c-min")]
    c_min: Option<f64>,
    /// Metric weight for the lmi engine, rows separated by ';'.
    #[arg(long = "p-matrix", value_name = "R11,R12;R21,R22")]
    p_matrix: Option<String>,
    /// Explicit right-hand side for the lmi engine.
    #[arg(long = "q-matrix", value_name = "R11,R12;R21,R22")]
    q_matrix: Option<String>,
    /// Rate form of the lmi right-hand side (Q = 2*rate*P); default 1e-6.
    #[arg(long = "q-rate")]
    q_rate: Option<f64>,
}

#[derive(Args)]
struct LasalleArgs {
    #[command(flatten)]
    system: SystemFlags,
    #[command(flatten)]
    metric: MetricFlags,
    #[command(flatten)]
    region: RegionFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Coordinates whose squared displacement forms the decay bound
    /// (default: all coordinates).
    #[arg(long = "alpha-coords", value_name = "I,J,...")]
    alpha_coords: Option<String>,
    /// Probe trajectories started inside the region (default 3).
    #[arg(long)]
    probes: Option<usize>,
    /// Probe integration horizon (default 40).
    #[arg(long)]
    horizon: Option<f64>,
    /// Required shrink factor of probe displacements (default 1e-3).
    #[arg(long = "decay-threshold")]
    decay_threshold: Option<f64>,
}

#[derive(Args)]
struct BendixsonArgs {
    #[command(flatten)]
    system: SystemFlags,
    #[command(flatten)]
    metric: MetricFlags,
    #[command(flatten)]
    region: RegionFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Required decay rate along the flow direction; default 1e-6.
    #[arg(long = "rate-min")]
    rate_min: Option<f64>,
}

#[derive(Args)]
struct DistanceArgs {
    #[command(flatten)]
    metric: MetricFlags,
    /// State space: euclidean, circle, or torus. Default euclidean.
    #[arg(long)]
    space: Option<String>,
    /// State dimension (default: inferred from --from).
    #[arg(long)]
    dim: Option<usize>,
    /// Start state, comma separated.
    #[arg(long, value_name = "X1,X2,...")]
    from: Option<String>,
    /// End state, comma separated.
    #[arg(long, value_name = "X1,X2,...")]
    to: Option<String>,
    /// Polyline segments (default 32).
    #[arg(long)]
    segments: Option<usize>,
    /// Optimizer sweep cap (default 5000).
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Relative convergence tolerance (default 1e-8).
    #[arg(long)]
    tol: Option<f64>,
    /// Use the shift-blind pseudo-distance of a horizontal metric.
    #[arg(long)]
    pseudo: bool,
}

#[derive(Args)]
struct DecayArgs {
    #[command(flatten)]
    system: SystemFlags,
    #[command(flatten)]
    metric: MetricFlags,
    /// First solution's initial state, comma separated.
    #[arg(long, value_name = "X1,X2,...")]
    from: Option<String>,
    /// Second solution's initial state, comma separated.
    #[arg(long, value_name = "X1,X2,...")]
    to: Option<String>,
    /// Last sampling time (default 4).
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Number of equal time steps up to t-max (default 8).
    #[arg(long = "t-steps")]
    t_steps: Option<usize>,
    /// Polyline segments per distance evaluation (default 16).
    #[arg(long)]
    segments: Option<usize>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario name (see --list).
    name: Option<String>,
    /// List the available scenarios and exit.
    #[arg(long)]
    list: bool,
    /// Run every scenario (in parallel) and fail if any check fails.
    #[arg(long, conflicts_with = "name")]
    all: bool,
    /// Override the scenarios' grid resolution per coordinate.
    #[arg(long)]
    grid: Option<usize>,
    /// Override the scenarios' random sample count.
    #[arg(long)]
    random: Option<usize>,
    /// Override the scenarios' probe/trajectory horizon.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct PropsArgs {
    #[command(flatten)]
    metric: MetricFlags,
    /// State space: euclidean, circle, or torus. Default euclidean.
    #[arg(long)]
    space: Option<String>,
    /// State dimension (default 2; circle forces 1).
    #[arg(long)]
    dim: Option<usize>,
    /// Sample count for the audit (default 500).
    #[arg(long)]
    samples: Option<usize>,
}

impl Command {
    /// Collect this command's flags into a configuration overlay.
    fn flags_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        match self {
            Command::Certify(a) => {
                a.system.fill(&mut cfg)?;
                a.metric.fill(&mut cfg)?;
                a.region.fill(&mut cfg);
                a.plan.fill(&mut cfg)?;
                if a.engine.is_some() {
                    cfg.engine = a.engine.clone();
                }
                if a.mode.is_some() {
                    cfg.mode = a.mode.clone();
                }
                if a.rate_min.is_some() {
                    cfg.rate_min = a.rate_min;
                }
                if a.norm.is_some() {
                    cfg.norm = a.norm.clone();
                }
                if a.c_min.is_some() {
                    cfg.c_min = a.c_min;
                }
                if let Some(p) = &a.p_matrix {
                    cfg.p_matrix = Some(parse_matrix(p).map_err(CliError::Usage)?);
                }
                if let Some(q) = &a.q_matrix {
                    cfg.q_matrix = Some(parse_matrix(q).map_err(CliError::Usage)?);
                }
                if a.q_rate.is_some() {
                    cfg.q_rate = a.q_rate;
                }
            }
            Command::Lasalle(a) => {
                a.system.fill(&mut cfg)?;
                a.metric.fill(&mut cfg)?;
                a.region.fill(&mut cfg);
                a.plan.fill(&mut cfg)?;
                if let Some(coords) = &a.alpha_coords {
                    cfg.alpha_coords = Some(parse_index_list(coords).map_err(CliError::Usage)?);
                }
                if a.probes.is_some() {
                    cfg.probes = a.probes;
                }
                if a.horizon.is_some() {
                    cfg.horizon = a.horizon;
                }
                if a.decay_threshold.is_some() {
                    cfg.decay_threshold = a.decay_threshold;
                }
            }
            Command::Bendixson(a) => {
                a.system.fill(&mut cfg)?;
                a.metric.fill(&mut cfg)?;
                a.region.fill(&mut cfg);
                a.plan.fill(&mut cfg)?;
                if a.rate_min.is_some() {
                    cfg.rate_min = a.rate_min;
                }
            }
            Command::Distance(a) => {
                a.metric.fill(&mut cfg)?;
                if a.space.is_some() {
                    cfg.space = a.space.clone();
                }
                if a.dim.is_some() {
                    cfg.dim = a.dim;
                }
                if let Some(from) = &a.from {
                    cfg.from = Some(parse_vector(from).map_err(CliError::Usage)?);
                }
                if let Some(to) = &a.to {
                    cfg.to = Some(parse_vector(to).map_err(CliError::Usage)?);
                }
                if a.segments.is_some() {
                    cfg.segments = a.segments;
                }
                if a.max_iters.is_some() {
                    cfg.max_iters = a.max_iters;
                }
                if a.tol.is_some() {
                    cfg.tol = a.tol;
                }
                if a.pseudo {
                    cfg.pseudo = Some(true);
                }
            }
            Command::Decay(a) => {
                a.system.fill(&mut cfg)?;
                a.metric.fill(&mut cfg)?;
                if let Some(from) = &a.from {
                    cfg.from = Some(parse_vector(from).map_err(CliError::Usage)?);
                }
                if let Some(to) = &a.to {
                    cfg.to = Some(parse_vector(to).map_err(CliError::Usage)?);
                }
                if a.t_max.is_some() {
                    cfg.t_max = a.t_max;
                }
                if a.t_steps.is_some() {
                    cfg.t_steps = a.t_steps;
                }
                if a.segments.is_some() {
                    cfg.segments = a.segments;
                }
            }
            Command::Scenario(a) => {
                if let Some(name) = &a.name {
                    cfg.scenario = Some(name.clone());
                }
                if a.grid.is_some() {
                    cfg.grid = a.grid;
                }
                if a.random.is_some() {
                    cfg.random = a.random;
                }
                if a.horizon.is_some() {
                    cfg.horizon = a.horizon;
                }
            }
            Command::Props(a) => {
                a.metric.fill(&mut cfg)?;
                if a.space.is_some() {
                    cfg.space = a.space.clone();
                }
                if a.dim.is_some() {
                    cfg.dim = a.dim;
                }
                if a.samples.is_some() {
                    cfg.samples = a.samples;
                }
            }
        }
        Ok(cfg)
    }
}

// --- entry -----------------------------------------------------------------

/// Parse the process arguments, execute, and return the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors; everything else
            // is a usage problem.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            3
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let file_cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    let mut flags = cli.command.flags_config()?;
    if cli.seed.is_some() {
        flags.seed = cli.seed;
    }
    if let Some(out) = &cli.out {
        flags.out = Some(out.to_string_lossy().into_owned());
    }
    if cli.threads.is_some() {
        flags.threads = cli.threads;
    }
    let mut cfg = file_cfg.merged_with(flags);

    let workers = resolve_threads(&cfg);
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();

    let (exit, payload, series) = match &cli.command {
        Command::Certify(_) => cmd_certify(&mut cfg)?,
        Command::Lasalle(_) => cmd_lasalle(&mut cfg)?,
        Command::Bendixson(_) => cmd_bendixson(&mut cfg)?,
        Command::Distance(_) => cmd_distance(&mut cfg)?,
        Command::Decay(_) => cmd_decay(&mut cfg)?,
        Command::Scenario(a) => cmd_scenario(&mut cfg, a.list, a.all)?,
        Command::Props(_) => cmd_props(&mut cfg)?,
    };

    if let Some(report) = payload {
        let envelope = Envelope {
            schema_version: SCHEMA_VERSION,
            timestamp: timestamp(),
            command: cli.command.name(),
            config: &cfg,
            report,
        };
        emit(&cfg.out, &envelope, &series)?;
    }
    Ok(exit)
}

/// Worker count: explicit flag/config, then the FINSLER_THREADS
/// environment variable, then whatever the machine offers.
fn resolve_threads(cfg: &RunConfig) -> usize {
    if let Some(t) = cfg.threads {
        return t.max(1);
    }
    if let Ok(text) = std::env::var("FINSLER_THREADS") {
        if let Ok(t) = text.trim().parse::<usize>() {
            if t >= 1 {
                return t;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

// --- report plumbing -------------------------------------------------------

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    /// Wall-clock stamp; the one field excluded from reproducibility.
    timestamp: String,
    command: &'a str,
    config: &'a RunConfig,
    report: Value,
}

fn timestamp() -> String {
    match SystemTime::now().duration_since(UNIX_EPOCH) {
        Ok(d) => format!("unix:{}", d.as_secs()),
        Err(_) => String::from("unix:0"),
    }
}

type Outcome = (i32, Option<Value>, Vec<(String, String)>);

fn emit(out: &Option<String>, envelope: &Envelope<'_>, series: &[(String, String)]) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(envelope).map_err(failure)?;
    json.push('\n');
    match out {
        None => print!("{json}"),
        Some(dir) => {
            let dir = Path::new(dir);
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
            let report_path = dir.join("report.json");
            fs::write(&report_path, &json)
                .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", report_path.display())))?;
            for (name, content) in series {
                let path = dir.join(name);
                fs::write(&path, content)
                    .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
            }
            eprintln!("wrote report.json and {} series file(s) to {}", series.len(), dir.display());
        }
    }
    Ok(())
}

fn verdict_exit(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::CertifiedIS | Verdict::CertifiedIAS | Verdict::CertifiedIES => 0,
        Verdict::Counterexample => 1,
        Verdict::Inconclusive => 2,
    }
}

// --- shared builders -------------------------------------------------------

fn catalog_params(
    scalars: &BTreeMap<String, f64>,
    matrices: &BTreeMap<String, Vec<Vec<f64>>>,
) -> Result<CatalogParams, CliError> {
    let mut params = CatalogParams::default();
    params.scalars = scalars.clone();
    for (key, rows) in matrices {
        let matrix = to_dmatrix(rows)
            .map_err(|e| CliError::Usage(format!("matrix parameter '{key}': {e}")))?;
        params.matrices.insert(key.clone(), matrix);
    }
    Ok(params)
}

fn build_system(cfg: &RunConfig) -> Result<System, CliError> {
    let name = cfg
        .system
        .as_deref()
        .ok_or_else(|| CliError::Usage(String::from("--system is required")))?;
    let params = catalog_params(&cfg.system_params, &cfg.system_matrices)?;
    make_builtin(name, &params).map_err(failure)
}

fn build_metric(cfg: &RunConfig, dim: usize) -> Result<FinslerLyapunov, CliError> {
    let name = cfg
        .metric
        .as_deref()
        .ok_or_else(|| CliError::Usage(String::from("--metric is required")))?;
    let params = catalog_params(&cfg.metric_params, &cfg.metric_matrices)?;
    make_metric(name, dim, &params).map_err(failure)
}

fn build_region(cfg: &RunConfig, dim: usize) -> Result<Region, CliError> {
    let spec = cfg
        .region
        .as_deref()
        .ok_or_else(|| CliError::Usage(String::from("--region is required")))?;
    parse_region(spec, dim).map_err(CliError::Usage)
}

fn build_plan(cfg: &mut RunConfig) -> SamplingPlan {
    SamplingPlan {
        grid_per_dim: *cfg.grid.get_or_insert(5),
        random_samples: *cfg.random.get_or_insert(128),
        seed: *cfg.seed.get_or_insert(7),
        time_samples: cfg.times.get_or_insert_with(|| vec![0.0]).clone(),
        delta_sphere_samples: *cfg.delta_samples.get_or_insert(8),
    }
}

fn build_space(cfg: &mut RunConfig, dim: usize) -> Result<CoordinateSpace, CliError> {
    let name = cfg.space.get_or_insert_with(|| String::from("euclidean")).clone();
    match name.as_str() {
        "euclidean" => CoordinateSpace::euclidean(dim).map_err(failure),
        "circle" => {
            if dim != 1 {
                return Err(CliError::Usage(format!(
                    "the circle is 1-dimensional, got dimension {dim}"
                )));
            }
            Ok(CoordinateSpace::circle())
        }
        "torus" => CoordinateSpace::torus(dim).map_err(failure),
        other => Err(CliError::Usage(format!(
            "unknown space '{other}' (expected euclidean, circle, or torus)"
        ))),
    }
}

// --- commands --------------------------------------------------------------

fn cmd_certify(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let s = build_system(cfg)?;
    let dim = s.dim();
    let region = build_region(cfg, dim)?;
    let plan = build_plan(cfg);
    let engine = cfg.engine.get_or_insert_with(|| String::from("region")).clone();
    let report = match engine.as_str() {
        "region" => {
            let v = build_metric(cfg, dim)?;
            let mode = cfg.mode.get_or_insert_with(|| String::from("ies")).clone();
            let rate_min = *cfg.rate_min.get_or_insert(1e-6);
            let alpha = match mode.as_str() {
                "is" => AlphaMode::Zero,
                "ias" => AlphaMode::ClassK(Box::new(move |value| rate_min * value)),
                "ies" => AlphaMode::Linear(rate_min),
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown mode '{other}' (expected is, ias, or ies)"
                    )))
                }
            };
            certify_region(&s, &v, &region, &plan, &alpha).map_err(failure)?
        }
        "measure" => {
            let norm_name = cfg.norm.get_or_insert_with(|| String::from("two")).clone();
            let norm = match norm_name.as_str() {
                "one" => MeasureNorm::One,
                "two" => MeasureNorm::Two,
                "inf" => MeasureNorm::Inf,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown norm '{other}' (expected one, two, or inf)"
                    )))
                }
            };
            let c_min = *cfg.c_min.get_or_insert(1e-6);
            certify_measure(&s, &region, norm, &plan, c_min).map_err(failure)?
        }
        "lmi" => {
            let p_rows = cfg
                .p_matrix
                .clone()
                .ok_or_else(|| CliError::Usage(String::from("the lmi engine needs --p-matrix")))?;
            let p = to_dmatrix(&p_rows).map_err(CliError::Usage)?;
            let q = match &cfg.q_matrix {
                Some(rows) => QSpec::Matrix(to_dmatrix(rows).map_err(CliError::Usage)?),
                None => QSpec::Rate(*cfg.q_rate.get_or_insert(1e-6)),
            };
            certify_lmi(&s, &p, &q, &region, &plan).map_err(failure)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown engine '{other}' (expected region, measure, or lmi)"
            )))
        }
    };
    let exit = verdict_exit(report.verdict);
    Ok((exit, Some(serde_json::to_value(&report).map_err(failure)?), Vec::new()))
}

fn cmd_lasalle(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let s = build_system(cfg)?;
    let dim = s.dim();
    let v = build_metric(cfg, dim)?;
    let region = build_region(cfg, dim)?;
    let plan = build_plan(cfg);
    let coords = cfg.alpha_coords.get_or_insert_with(|| (0..dim).collect()).clone();
    if let Some(&bad) = coords.iter().find(|&&i| i >= dim) {
        return Err(CliError::Usage(format!(
            "alpha coordinate {bad} is out of range for a {dim}-dimensional state"
        )));
    }
    let probes = *cfg.probes.get_or_insert(3);
    let horizon = *cfg.horizon.get_or_insert(40.0);
    let threshold = *cfg.decay_threshold.get_or_insert(1e-3);
    let alpha = move |_x: &[f64], d: &[f64]| coords.iter().map(|&i| d[i] * d[i]).sum::<f64>();
    let report =
        lasalle(&s, &v, alpha, &region, &plan, probes, horizon, threshold).map_err(failure)?;
    let exit = verdict_exit(report.verdict);
    Ok((exit, Some(serde_json::to_value(&report).map_err(failure)?), Vec::new()))
}

fn cmd_bendixson(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let s = build_system(cfg)?;
    let dim = s.dim();
    // Flow-direction decay defaults to the plain Euclidean energy.
    cfg.metric.get_or_insert_with(|| String::from("quadratic"));
    let v = build_metric(cfg, dim)?;
    let region = build_region(cfg, dim)?;
    let plan = build_plan(cfg);
    let rate_min = *cfg.rate_min.get_or_insert(1e-6);
    let report = bendixson(&s, &v, &region, &plan, rate_min).map_err(failure)?;
    let exit = verdict_exit(report.verdict);
    Ok((exit, Some(serde_json::to_value(&report).map_err(failure)?), Vec::new()))
}

/// Curve-optimization payload; the polyline nodes also go to
/// `curve.csv` when an output directory is given.
#[derive(Serialize)]
struct DistancePayload {
    value: f64,
    iterations: usize,
    converged: bool,
    domain_rejections: usize,
    label: String,
    curve: Vec<Vec<f64>>,
}

fn cmd_distance(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let from = cfg
        .from
        .clone()
        .ok_or_else(|| CliError::Usage(String::from("--from is required")))?;
    let to = cfg
        .to
        .clone()
        .ok_or_else(|| CliError::Usage(String::from("--to is required")))?;
    if from.len() != to.len() {
        return Err(CliError::Usage(format!(
            "--from has {} coordinate(s) but --to has {}",
            from.len(),
            to.len()
        )));
    }
    if let Some(d) = cfg.dim {
        if d != from.len() {
            return Err(CliError::Usage(format!(
                "--dim {} disagrees with the {}-coordinate endpoints",
                d,
                from.len()
            )));
        }
    }
    cfg.dim = Some(from.len());
    let space = build_space(cfg, from.len())?;
    let v = build_metric(cfg, from.len())?;
    let segments = *cfg.segments.get_or_insert(32);
    let max_iters = *cfg.max_iters.get_or_insert(5000);
    let tol = *cfg.tol.get_or_insert(1e-8);
    let pseudo = *cfg.pseudo.get_or_insert(false);
    let result = if pseudo {
        let split = v.horizontal().ok_or_else(|| {
            CliError::Usage(format!(
                "metric '{}' carries no horizontal splitting for --pseudo",
                v.name()
            ))
        })?;
        pseudo_distance(&v, split, &space, &from, &to, segments, max_iters, tol).map_err(failure)?
    } else {
        finsler_distance(&v, &space, &from, &to, segments, max_iters, tol).map_err(failure)?
    };

    let nodes: Vec<Vec<f64>> =
        result.curve.nodes().iter().map(|p| p.coords().to_vec()).collect();
    let mut csv = String::from("index");
    for i in 0..from.len() {
        csv.push_str(&format!(", c{i}"));
    }
    csv.push('\n');
    for (row, node) in nodes.iter().enumerate() {
        csv.push_str(&format!("{row}"));
        for value in node {
            csv.push_str(&format!(", {value:.16e}"));
        }
        csv.push('\n');
    }

    let payload = DistancePayload {
        value: result.value,
        iterations: result.iterations,
        converged: result.converged,
        domain_rejections: result.domain_rejections,
        label: result.label.to_string(),
        curve: nodes,
    };
    let exit = if result.converged { 0 } else { 2 };
    Ok((
        exit,
        Some(serde_json::to_value(&payload).map_err(failure)?),
        vec![(String::from("curve.csv"), csv)],
    ))
}

fn cmd_decay(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let s = build_system(cfg)?;
    let v = build_metric(cfg, s.dim())?;
    let from = cfg
        .from
        .clone()
        .ok_or_else(|| CliError::Usage(String::from("--from is required")))?;
    let to = cfg
        .to
        .clone()
        .ok_or_else(|| CliError::Usage(String::from("--to is required")))?;
    let t_max = *cfg.t_max.get_or_insert(4.0);
    let t_steps = *cfg.t_steps.get_or_insert(8);
    if t_steps == 0 || !(t_max > 0.0) {
        return Err(CliError::Usage(format!(
            "decay needs t-max > 0 and t-steps >= 1 (got {t_max} and {t_steps})"
        )));
    }
    let grid: Vec<f64> = (0..=t_steps).map(|i| t_max * i as f64 / t_steps as f64).collect();
    let segments = *cfg.segments.get_or_insert(16);
    let report = empirical_decay(&s, &v, &from, &to, &grid, segments).map_err(failure)?;
    let exit = if report.degenerate || report.lambda_hat.is_none() { 2 } else { 0 };
    let csv = report.to_csv();
    Ok((
        exit,
        Some(serde_json::to_value(&report).map_err(failure)?),
        vec![(String::from("decay.csv"), csv)],
    ))
}

fn cmd_scenario(cfg: &mut RunConfig, list: bool, all: bool) -> Result<Outcome, CliError> {
    if list {
        for sc in scenarios() {
            println!("{}: {} [system {}, metric {}]", sc.name, sc.summary, sc.system, sc.metric);
        }
        return Ok((0, None, Vec::new()));
    }
    let overrides = ScenarioOverrides {
        seed: cfg.seed,
        grid_per_dim: cfg.grid,
        random_samples: cfg.random,
        horizon: cfg.horizon,
    };
    if all {
        let names = scenario_names();
        let outcomes: Vec<_> =
            names.par_iter().map(|name| run_scenario(name, &overrides)).collect();
        let mut reports = Vec::new();
        let mut series = Vec::new();
        let mut all_passed = true;
        for outcome in outcomes {
            let report = outcome.map_err(failure)?;
            all_passed &= report.passed;
            for s in &report.series {
                series.push((format!("{}_{}.csv", report.scenario, s.name), s.csv.clone()));
            }
            reports.push(report);
        }
        let exit = if all_passed { 0 } else { 1 };
        return Ok((exit, Some(serde_json::to_value(&reports).map_err(failure)?), series));
    }
    let name = cfg.scenario.clone().ok_or_else(|| {
        CliError::Usage(String::from("a scenario name is required (or use --list / --all)"))
    })?;
    let report = run_scenario(&name, &overrides).map_err(failure)?;
    let series: Vec<(String, String)> = report
        .series
        .iter()
        .map(|s| (format!("{}_{}.csv", report.scenario, s.name), s.csv.clone()))
        .collect();
    let exit = if report.passed { 0 } else { 1 };
    Ok((exit, Some(serde_json::to_value(&report).map_err(failure)?), series))
}

fn cmd_props(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let space_name = cfg.space.get_or_insert_with(|| String::from("euclidean")).clone();
    let dim = match space_name.as_str() {
        "circle" => {
            let d = cfg.dim.unwrap_or(1);
            if d != 1 {
                return Err(CliError::Usage(format!(
                    "the circle is 1-dimensional, got dimension {d}"
                )));
            }
            1
        }
        _ => cfg.dim.unwrap_or(2),
    };
    cfg.dim = Some(dim);
    let space = build_space(cfg, dim)?;
    let v = build_metric(cfg, dim)?;
    let samples = *cfg.samples.get_or_insert(500);
    let seed = *cfg.seed.get_or_insert(7);
    let report = property_suite(&v, &space, samples, seed).map_err(failure)?;
    let exit = if report.all_pass() { 0 } else { 1 };
    Ok((exit, Some(serde_json::to_value(&report).map_err(failure)?), Vec::new()))
}
