//! The `restora` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use restora_core::ncadmm::{run_restoration_with, RunError};
use restora_core::{
    bottom_up_cluster, default_relaxation, derive_adjacency, optimal_cluster_count, oracle_solve, validate_feeder, Clustering, Feeder,
    Mode, OracleError, RootedTree, Scenario, SolverConfig,
};
use serde::{Deserialize, Serialize};

use crate::cluster_file::ClusterFile;
use crate::compare::compare_plans;
use crate::error::{read_text, InputError};
use crate::exec::{available_threads, Threaded};
use crate::feeder_file::{from_json_str, parse_feeder, scenario_from_json_str, FeederFile};
use crate::manifest::{unix_ms, ClusteringDoc, ConfigDoc, Convergence, Inputs, RunManifest};
use crate::num::Num;
use crate::plan_file::{PlanFile, ORACLE_MODE};
use crate::trace_file::write_trace_file;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNSOLVED: i32 = 3;
pub const EXIT_LIMIT: i32 = 4;

pub const PLAN_FILE: &str = "plan.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORACLE_FILE: &str = "oracle.json";

#[derive(Debug, Parser)]
#[command(name = "restora", version, about = "Service restoration planning for radial distribution feeders")]
pub struct Cli {
    /// Worker threads for agent solves [default: available cores]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition the feeder into clusters and print the clustering as JSON
    Cluster {
        feeder: PathBuf,
        /// Number of clusters [default: optimal count for the node count]
        #[arg(long)]
        k: Option<usize>,
        /// Initial size slack, widened automatically when no subtree fits
        /// [default: a fifth of the ideal cluster size]
        #[arg(long)]
        r: Option<usize>,
        /// Write the JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan the restoration with consensus ADMM
    Solve(SolveArgs),
    /// Certify the best plan by exhaustive enumeration (small feeders)
    Oracle {
        feeder: PathBuf,
        /// Scenario file, when the feeder file has none
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Directory for oracle.json, plan.json and manifest.json
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare two plan files for the same scenario
    Compare {
        plan_a: PathBuf,
        plan_b: PathBuf,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a feeder file and report invariant violations as JSON
    Validate {
        feeder: PathBuf,
        /// Scenario file to check against the feeder
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub feeder: PathBuf,
    /// Scenario file, when the feeder file has none
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// nc_admm or projection
    #[arg(long, default_value = "nc_admm")]
    pub mode: String,
    /// Consensus penalty [default: 1]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Growth gain of the proximal factor
    #[arg(long)]
    pub c: Option<f64>,
    /// Base residual tolerance
    #[arg(long)]
    pub eps: Option<f64>,
    /// Cap on consensus rounds over all phases [default: 5000]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Cap on rounds in the drive phase [default: 1500]
    #[arg(long)]
    pub max_prox_iters: Option<usize>,
    /// Number of clusters [default: optimal count for the node count]
    #[arg(long)]
    pub k: Option<usize>,
    /// Cluster size slack [default: a fifth of the ideal cluster size]
    #[arg(long)]
    pub r: Option<usize>,
    /// Directory for plan.json, trace.csv and manifest.json
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Input(InputError),
    /// Solver or enumeration limits.
    Limit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Limit(_) => EXIT_LIMIT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "{e}"),
            CliError::Limit(m) => write!(f, "limit reached: {m}"),
        }
    }
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(InputError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn display(path: &Path) -> String {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()).display().to_string()
}

/// Feeder plus the scenario from `--scenario` or the feeder file itself.
fn load_case(feeder: &Path, scenario: Option<&Path>) -> Result<(Feeder, Scenario), CliError> {
    let FeederFile { feeder: f, scenario: embedded } = parse_feeder(feeder)?;
    let sc = match scenario {
        Some(p) => scenario_from_json_str(&read_text(p)?, &f)?,
        None => embedded.ok_or_else(|| {
            InputError::Config(format!("{} has no scenario; pass --scenario", feeder.display()))
        })?,
    };
    Ok((f, sc))
}

fn cluster_feeder(f: &Feeder, k: Option<usize>, r: Option<usize>) -> Result<(Clustering, usize, usize), CliError> {
    let n = f.nodes().len();
    let k = k.unwrap_or_else(|| optimal_cluster_count(n, 1.0, 1.0));
    if k == 0 || k > n {
        return Err(InputError::Config(format!("--k must be between 1 and {n} (got {k})")).into());
    }
    let r = r.unwrap_or_else(|| default_relaxation(n, k));
    let invalid = |e: restora_core::TopologyError| CliError::Input(InputError::Invalid(e.to_string()));
    let tree = RootedTree::from_feeder(f).map_err(invalid)?;
    Ok((derive_adjacency(&bottom_up_cluster(&tree, k, r), f).map_err(invalid)?, k, r))
}

fn size_summary(cl: &Clustering) -> String {
    let sizes = cl.sizes();
    let min = sizes.iter().min().copied().unwrap_or(0);
    let max = sizes.iter().max().copied().unwrap_or(0);
    let list: Vec<String> = sizes.iter().map(usize::to_string).collect();
    format!("{} clusters, sizes [{}] (min {min}, max {max})", sizes.len(), list.join(", "))
}

fn cmd_cluster(feeder: &Path, k: Option<usize>, r: Option<usize>, out: Option<&Path>) -> Result<i32, CliError> {
    let FeederFile { feeder: f, .. } = parse_feeder(feeder)?;
    let (cl, k, r) = cluster_feeder(&f, k, r)?;
    eprintln!("k={k} r={r}: {}", size_summary(&cl));
    let text = ClusterFile::new(&cl, &f, k, r).to_json_string();
    match out {
        Some(p) => write_file(p, &text)?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

fn solver_config(a: &SolveArgs) -> Result<SolverConfig, CliError> {
    let mode = Mode::parse(&a.mode)
        .ok_or_else(|| InputError::Config(format!("unknown mode `{}` (expected nc_admm or projection)", a.mode)))?;
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        rho: a.rho.unwrap_or(d.rho),
        c: a.c.unwrap_or(d.c),
        eps: a.eps.unwrap_or(d.eps),
        max_iters: a.max_iters.unwrap_or(d.max_iters),
        max_prox_iters: a.max_prox_iters.unwrap_or(d.max_prox_iters),
        mode,
        ..d
    };
    cfg.validate().map_err(|e| InputError::Config(e.to_string()))?;
    Ok(cfg)
}

fn run_error(e: RunError) -> CliError {
    match e {
        RunError::Config(e) => InputError::Config(e.to_string()).into(),
        RunError::Scenario(e) => InputError::Invalid(format!("scenario: {e}")).into(),
        RunError::Clustering(m) => InputError::Invalid(format!("clustering: {m}")).into(),
        e @ (RunError::Subproblem(_) | RunError::Solver(_)) => CliError::Limit(e.to_string()),
    }
}

fn outputs(dir: &Path, names: &[(&str, &str)]) -> BTreeMap<String, String> {
    names.iter().map(|(k, f)| (k.to_string(), display(&dir.join(f)))).collect()
}

fn cmd_solve(a: &SolveArgs, threads: usize) -> Result<i32, CliError> {
    let (f, sc) = load_case(&a.feeder, a.scenario.as_deref())?;
    let cfg = solver_config(a)?;
    let (cl, k, r) = cluster_feeder(&f, a.k, a.r)?;
    std::fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let started = unix_ms();
    log::info!("solving {} with {} agents on {threads} threads", a.feeder.display(), cl.len());
    let (plan, trace) = run_restoration_with(&f, &sc, &cl, &cfg, &Threaded::new(threads)).map_err(run_error)?;
    let finished = unix_ms();

    let plan_path = a.out_dir.join(PLAN_FILE);
    let trace_path = a.out_dir.join(TRACE_FILE);
    let manifest_path = a.out_dir.join(MANIFEST_FILE);
    write_trace_file(&trace, &trace_path)?;
    write_file(&plan_path, &PlanFile::new(&plan, &f, &sc).to_json_string())?;
    let manifest = RunManifest {
        tool: "restora".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "solve".into(),
        inputs: Inputs { feeder: display(&a.feeder), scenario: a.scenario.as_deref().map(display) },
        mode: cfg.mode.as_str().into(),
        config: ConfigDoc::from(&cfg),
        clustering: Some(ClusteringDoc { k, r, sizes: cl.sizes() }),
        threads,
        started_unix_ms: started,
        finished_unix_ms: finished,
        outputs: BTreeMap::new(),
        convergence: Convergence::new(&plan, Some(&trace)),
    };
    let manifest = RunManifest {
        outputs: outputs(&a.out_dir, &[("plan", PLAN_FILE), ("trace", TRACE_FILE), ("manifest", MANIFEST_FILE)]),
        ..manifest
    };
    write_file(&manifest_path, &manifest.to_json_string())?;

    let ok = plan.converged() && plan.is_feasible();
    eprintln!(
        "{}: {} after {} iterations, objective {:.6}, {} violations",
        cfg.mode.as_str(),
        plan.status.as_str(),
        plan.iterations,
        plan.objective,
        plan.feasibility.violations.len()
    );
    for v in plan.feasibility.violations.iter().take(5) {
        eprintln!("  {v}");
    }
    println!("{}", plan_path.display());
    Ok(if ok { EXIT_OK } else { EXIT_UNSOLVED })
}

/// Enumeration counts and objective written by the `oracle` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub objective: Num,
    pub enumerated: usize,
    pub evaluated: usize,
    pub feasible: usize,
    pub plan: PlanFile,
}

fn cmd_oracle(feeder: &Path, scenario: Option<&Path>, out_dir: &Path, threads: usize) -> Result<i32, CliError> {
    let (f, sc) = load_case(feeder, scenario)?;
    let cfg = SolverConfig::default();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let started = unix_ms();
    let r = oracle_solve(&f, &sc, &cfg).map_err(|e| match e {
        OracleError::Config(e) => InputError::Config(e.to_string()).into(),
        OracleError::Scenario(e) => InputError::Invalid(format!("scenario: {e}")).into(),
        e @ (OracleError::TooManyBinaries { .. } | OracleError::Solver(_)) => CliError::Limit(e.to_string()),
    })?;
    let finished = unix_ms();
    let plan = PlanFile { mode: ORACLE_MODE.into(), ..PlanFile::new(&r.plan, &f, &sc) };
    let file = OracleFile {
        objective: Num(r.objective),
        enumerated: r.enumerated,
        evaluated: r.evaluated,
        feasible: r.feasible,
        plan: plan.clone(),
    };
    write_file(&out_dir.join(ORACLE_FILE), &serde_json::to_string_pretty(&file).expect("serializable"))?;
    write_file(&out_dir.join(PLAN_FILE), &plan.to_json_string())?;
    let manifest = RunManifest {
        tool: "restora".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "oracle".into(),
        inputs: Inputs { feeder: display(feeder), scenario: scenario.map(display) },
        mode: "oracle".into(),
        config: ConfigDoc::from(&cfg),
        clustering: None,
        threads,
        started_unix_ms: started,
        finished_unix_ms: finished,
        outputs: outputs(out_dir, &[("oracle", ORACLE_FILE), ("plan", PLAN_FILE), ("manifest", MANIFEST_FILE)]),
        convergence: Convergence::new(&r.plan, None),
    };
    write_file(&out_dir.join(MANIFEST_FILE), &manifest.to_json_string())?;
    eprintln!(
        "oracle: objective {:.6}, {} enumerated, {} evaluated, {} feasible",
        r.objective, r.enumerated, r.evaluated, r.feasible
    );
    println!("{}", out_dir.join(ORACLE_FILE).display());
    Ok(if r.feasible > 0 && r.plan.is_feasible() { EXIT_OK } else { EXIT_UNSOLVED })
}

fn cmd_compare(a: &Path, b: &Path, out: Option<&Path>) -> Result<i32, CliError> {
    let report = compare_plans(&PlanFile::read(a)?, &PlanFile::read(b)?)?;
    eprintln!(
        "objective {} vs {} (gap {:.4}%), {} switch changes",
        report.objective_a.0,
        report.objective_b.0,
        report.objective_gap_pct.0,
        report.switch_diff.len()
    );
    for s in &report.steps {
        eprintln!("  step {}: restored {:.6} vs {:.6} (delta {:+.6})", s.step, s.restored_a.0, s.restored_b.0, s.delta.0);
    }
    let text = serde_json::to_string_pretty(&report).expect("serializable");
    match out {
        Some(p) => write_file(p, &text)?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

/// Output of the `validate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub ok: bool,
    pub nodes: usize,
    pub lines: usize,
    pub has_scenario: bool,
    pub violations: Vec<String>,
}

fn cmd_validate(feeder: &Path, scenario: Option<&Path>) -> Result<i32, CliError> {
    let FeederFile { feeder: f, scenario: embedded } = from_json_str(&read_text(feeder)?)?;
    let sc = match scenario {
        Some(p) => Some(scenario_from_json_str(&read_text(p)?, &f)?),
        None => embedded,
    };
    let report = validate_feeder(&f);
    let out = ValidateReport {
        ok: report.ok(),
        nodes: f.nodes().len(),
        lines: f.lines().len(),
        has_scenario: sc.is_some(),
        violations: report.violations.iter().map(|v| v.to_string()).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(if out.ok { EXIT_OK } else { EXIT_INPUT })
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(InputError::Config("--threads must be at least 1".into()).into()),
        Some(n) => n,
        None => available_threads(),
    };
    match &cli.command {
        Command::Cluster { feeder, k, r, out } => cmd_cluster(feeder, *k, *r, out.as_deref()),
        Command::Solve(a) => cmd_solve(a, threads),
        Command::Oracle { feeder, scenario, out_dir } => cmd_oracle(feeder, scenario.as_deref(), out_dir, threads),
        Command::Compare { plan_a, plan_b, out } => cmd_compare(plan_a, plan_b, out.as_deref()),
        Command::Validate { feeder, scenario } => cmd_validate(feeder, scenario.as_deref()),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Installs the logger; verbosity comes from `RESTORA_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("RESTORA_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}
