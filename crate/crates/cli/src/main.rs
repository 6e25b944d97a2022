mod report;
mod run;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::report::{emit_report, to_json_bytes, Format};
use crate::scenario::{load_manifest, load_problem, Kind, Scenario};

/// Runs martingale-transport, transform and embedding scenarios and writes
/// plot-ready reports.
#[derive(Parser)]
#[command(name = "motforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file, or manifest for `suite`.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "reports")]
    output_dir: PathBuf,
    /// Seed for stochastic scenarios. Overrides the file's seed; for `suite`
    /// it only fills in missing seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for scenarios and their internal parallel loops.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
#[command(rename_all = "snake_case")]
enum Command {
    /// Solve a discrete martingale transport problem.
    MotSolve(Common),
    /// Test a support set for finite monotonicity under a cost.
    MonotoneCheck(Common),
    /// Push a coupling and optionally a cost through a transform.
    TransformApply(Common),
    /// Classify a transform as affine, numeraire or neither.
    TransformClassify(Common),
    /// Fit a barrier embedding one law into another.
    SepFit(Common),
    /// Compare open and closed stopping regions under grid refinement.
    SepCompare(Common),
    /// Test a pair of stopped paths for the stop-go property.
    StopGo(Common),
    /// Solve problems directly and through a symmetry and compare.
    SymmetrySuite(Common),
    /// Run every scenario of a manifest.
    Suite(Common),
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("MOTFORGE_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
}

fn print_json(v: &Value) {
    let bytes = to_json_bytes(v).expect("summary is serializable");
    print!("{}", String::from_utf8_lossy(&bytes));
}

fn load(cmd: &Command) -> Result<(Vec<Scenario>, Common), scenario::LoadError> {
    let (kind, common) = match cmd {
        Command::MotSolve(c) => (Some(Kind::MotSolve), c),
        Command::MonotoneCheck(c) => (Some(Kind::MonotoneCheck), c),
        Command::TransformApply(c) => (Some(Kind::TransformApply), c),
        Command::TransformClassify(c) => (Some(Kind::TransformClassify), c),
        Command::SepFit(c) => (Some(Kind::SepFit), c),
        Command::SepCompare(c) => (Some(Kind::SepCompare), c),
        Command::StopGo(c) => (Some(Kind::StopGo), c),
        Command::SymmetrySuite(c) => (Some(Kind::SymmetrySuite), c),
        Command::Suite(c) => (None, c),
    };
    let scenarios = match kind {
        Some(k) => vec![load_problem(&common.input, Some(k), common.seed)?],
        None => load_manifest(&common.input, common.seed)?,
    };
    Ok((scenarios, common.clone()))
}

fn execute(scenarios: &[Scenario], common: &Common) -> (Value, bool) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(common.jobs.max(1)).build();
    let results = match pool {
        Ok(pool) => pool.install(|| scenarios.par_iter().map(run::run_scenario).collect::<Vec<_>>()),
        Err(e) => {
            log::warn!("cannot build a thread pool ({e}), running sequentially");
            scenarios.iter().map(run::run_scenario).collect()
        }
    };
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(report) => {
                let files = match emit_report(&report, &common.output_dir, common.format) {
                    Ok(files) => files,
                    Err(e) => {
                        failures.push(json!({"scenario": s.name, "stage": "emit", "message": e.to_string()}));
                        Vec::new()
                    }
                };
                for f in &report.failures {
                    failures.push(json!({"scenario": s.name, "stage": "assert", "message": f}));
                }
                entries.push(json!({
                    "scenario": s.name,
                    "kind": s.kind.tag(),
                    "passed": report.passed,
                    "files": files,
                }));
            }
            Err(e) => {
                failures.push(json!({"scenario": s.name, "stage": "run", "file": s.source, "message": e.message}));
                entries.push(json!({"scenario": s.name, "kind": s.kind.tag(), "passed": false, "files": []}));
            }
        }
    }
    let ok = failures.is_empty();
    (json!({"passed": ok, "scenarios": entries, "failures": failures}), ok)
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let (scenarios, common) = match load(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            log::error!("{e}");
            print_json(&json!({"passed": false, "scenarios": [], "failures": [e.to_json()]}));
            return ExitCode::from(2);
        }
    };
    let (summary, ok) = execute(&scenarios, &common);
    print_json(&summary);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

