//! Command-line front end: `run`, `sweep` and `scenario` subcommands and the
//! output bundle writer.
//!
//! Exit codes: 0 success, 1 solve or I/O failure, 2 usage or validation
//! error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::optimizer::{Algorithm, OptimizeError, SolveReport, DEFAULT_MAX_OUTER, DEFAULT_TOL};
use crate::scenario::{default_scenario, load_scenario, to_json, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "uris-mec", version, about = "Energy-efficiency optimizer for RIS-assisted edge computing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm and write an output bundle.
    Run(RunArgs),
    /// Run algorithms over a list of mission times.
    Sweep(SweepArgs),
    /// Print (or write) the default scenario document.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON; the built-in default when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Relative EE change that ends the outer loop.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_OUTER)]
    pub max_outer: usize,
    /// Recorded in the manifest; the algorithms themselves draw no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall-clock times in the manifest (breaks byte-identical output).
    #[arg(long)]
    pub timestamps: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub algorithm: Algorithm,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Mission times T in seconds; each must be a whole number of slots.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = Algorithm::ALL.to_vec())]
    pub algorithms: Vec<Algorithm>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Destination file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Solve(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Solve(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Scenario(_) | OptimizeError::Invalid(_) => CliError::Validation(e.to_string()),
            other => CliError::Solve(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Scenario document bytes and the parsed configuration.
#[derive(Debug, Clone)]
pub struct ScenarioSource {
    pub label: String,
    pub bytes: Vec<u8>,
    pub config: ScenarioConfig,
}

pub fn load_source(path: Option<&Path>) -> Result<ScenarioSource, CliError> {
    match path {
        None => {
            let config = default_scenario();
            Ok(ScenarioSource {
                label: "default".into(),
                bytes: to_json(&config).into_bytes(),
                config,
            })
        }
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| CliError::Validation(format!("{}: not UTF-8", p.display())))?;
            let config = load_scenario(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            Ok(ScenarioSource {
                label: p.display().to_string(),
                bytes,
                config,
            })
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_common(c: &CommonArgs) -> Result<(), CliError> {
    if !(c.tol > 0.0 && c.tol.is_finite()) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", c.tol)));
    }
    if c.max_outer == 0 {
        return Err(CliError::Usage("--max-outer must be at least 1".into()));
    }
    Ok(())
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn trajectory_csv(report: &SolveReport) -> String {
    let traj = &report.trajectory;
    let v = traj.velocities();
    let a = traj.accelerations();
    let mut s = String::from("n,x,y,vx,vy,ax,ay\n");
    for (i, q) in traj.waypoints.iter().enumerate() {
        // The terminal waypoint has no outgoing slot.
        let (vi, ai) = match (v.get(i), a.get(i)) {
            (Some(v), Some(a)) => (*v, *a),
            _ => (Default::default(), Default::default()),
        };
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            i + 1,
            q.x,
            q.y,
            vi.x,
            vi.y,
            ai.x,
            ai.y
        );
    }
    s
}

fn schedule_csv(report: &SolveReport) -> String {
    let mut s = String::from("n,k\n");
    for (n, k) in report.schedule.served().iter().enumerate() {
        let _ = writeln!(s, "{},{}", n + 1, k + 1);
    }
    s
}

fn convergence_csv(report: &SolveReport) -> String {
    let mut s = String::from("outer_iter,ee,lambda_final\n");
    for (i, ee) in report.ee_trace.iter().enumerate() {
        let lambda = if i == 0 {
            f64::NAN
        } else {
            report.lambda_traces[i - 1].last().copied().unwrap_or(f64::NAN)
        };
        let _ = writeln!(s, "{i},{ee:e},{lambda:e}");
    }
    s
}

fn summary_value(report: &SolveReport, timestamps: bool) -> serde_json::Value {
    let mut v = json!({
        "algorithm": report.algorithm.name(),
        "ee": report.ee,
        "total_bits": report.total_bits(),
        "min_user_bits": report.min_user_bits(),
        "user_bits": report.user_bits,
        "total_energy": report.energy.total_weighted,
        "objective": report.ee_trace.last().copied(),
        "status": report.status.to_string(),
        "outer_iterations": report.outer_iterations,
    });
    if timestamps {
        v["wall_time_s"] = json!(report.wall_time.as_secs_f64());
    }
    v
}

/// Provenance record written next to every bundle.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scenario_digest: String,
    pub scenario_source: String,
    pub algorithm: String,
    pub tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    pub version: String,
    pub timestamps: Option<Timestamps>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timestamps {
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

/// Writes the eight bundle files for one report into `dir`.
pub fn write_bundle(
    dir: &Path,
    report: &SolveReport,
    source: &ScenarioSource,
    manifest: &RunManifest,
    timestamps: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(report))?;
    write_file(&dir.join("schedule.csv"), &schedule_csv(report))?;
    let alloc = &report.allocation;
    let users: Vec<_> = (0..alloc.l_offload.len())
        .map(|k| {
            json!({
                "k": k + 1,
                "l_o": alloc.l_offload[k],
                "l_l": alloc.l_local[k],
                "f_o": alloc.f_server[k],
            })
        })
        .collect();
    write_file(&dir.join("allocation.json"), &json_text(&json!({ "users": users })))?;
    write_file(&dir.join("energy.json"), &json_text(&report.energy))?;
    write_file(&dir.join("convergence.csv"), &convergence_csv(report))?;
    write_file(&dir.join("summary.json"), &json_text(&summary_value(report, timestamps)))?;
    write_file(&dir.join("manifest.json"), &json_text(manifest))?;
    let path = dir.join("scenario.json");
    fs::write(&path, &source.bytes).map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn manifest(source: &ScenarioSource, algorithm: Algorithm, common: &CommonArgs, started: f64) -> RunManifest {
    RunManifest {
        scenario_digest: sha256_hex(&source.bytes),
        scenario_source: source.label.clone(),
        algorithm: algorithm.name().into(),
        tol: common.tol,
        max_outer: common.max_outer,
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        timestamps: common.timestamps.then(|| Timestamps {
            started_unix_s: started,
            finished_unix_s: unix_seconds(),
        }),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<SolveReport, CliError> {
    check_common(&args.common)?;
    let source = load_source(args.common.scenario.as_deref())?;
    let started = unix_seconds();
    let report = args.algorithm.run(&source.config, args.common.tol, args.common.max_outer)?;
    let m = manifest(&source, args.algorithm, &args.common, started);
    write_bundle(&args.common.out, &report, &source, &m, args.common.timestamps)?;
    Ok(report)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub mission_time: f64,
    pub result: Result<SolveReport, String>,
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("algorithm,T,ee,total_bits,total_energy,iters,status\n");
    for r in rows {
        match &r.result {
            Ok(rep) => {
                let _ = writeln!(
                    s,
                    "{},{:e},{:e},{:e},{:e},{},{}",
                    r.algorithm,
                    r.mission_time,
                    rep.ee,
                    rep.total_bits(),
                    rep.energy.total_weighted,
                    rep.outer_iterations,
                    rep.status
                );
            }
            Err(_) => {
                let nan = f64::NAN;
                let _ = writeln!(s, "{},{:e},{nan:e},{nan:e},{nan:e},0,failed", r.algorithm, r.mission_time);
            }
        }
    }
    s
}

/// Slot count for mission time `t` at the scenario's slot length.
pub fn slots_for(t: f64, delta_t: f64) -> Result<usize, CliError> {
    let n = t / delta_t;
    let rounded = n.round();
    if !(t > 0.0) || (n - rounded).abs() > 1e-9 * n.max(1.0) || rounded < 2.0 {
        return Err(CliError::Validation(format!(
            "T = {t} s is not a whole number (at least 2) of {delta_t} s slots"
        )));
    }
    Ok(rounded as usize)
}

fn point_dir(out: &Path, algorithm: Algorithm, t: f64) -> PathBuf {
    out.join(algorithm.name()).join(format!("T{t}"))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    check_common(&args.common)?;
    if args.values.is_empty() {
        return Err(CliError::Usage("--values needs at least one mission time".into()));
    }
    if args.algorithms.is_empty() {
        return Err(CliError::Usage("--algorithms needs at least one name".into()));
    }
    let source = load_source(args.common.scenario.as_deref())?;
    let mut points = Vec::new();
    for &alg in &args.algorithms {
        for &t in &args.values {
            points.push((alg, t, slots_for(t, source.config.delta_t)?));
        }
    }

    let jobs = args
        .jobs
        .unwrap_or_else(|| thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, points.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; points.len()]);
    let common = &args.common;
    let io_error: Mutex<Option<CliError>> = Mutex::new(None);
    thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(alg, t, n)) = points.get(i) else {
                    break;
                };
                let cfg = source.config.with_slots(n);
                let started = unix_seconds();
                let result = alg.run(&cfg, common.tol, common.max_outer).map_err(|e| e.to_string());
                match &result {
                    Ok(report) => {
                        let point_source = ScenarioSource {
                            label: source.label.clone(),
                            bytes: to_json(&cfg).into_bytes(),
                            config: cfg.clone(),
                        };
                        let m = manifest(&point_source, alg, common, started);
                        let dir = point_dir(&common.out, alg, t);
                        if let Err(e) = write_bundle(&dir, report, &point_source, &m, common.timestamps) {
                            io_error.lock().unwrap().get_or_insert(e);
                        }
                    }
                    Err(e) => log::error!("{alg} at T = {t}: {e}"),
                }
                results.lock().unwrap()[i] = Some(SweepRow {
                    algorithm: alg,
                    mission_time: t,
                    result,
                });
            });
        }
    });
    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(e);
    }
    let rows: Vec<SweepRow> = results.into_inner().unwrap().into_iter().map(|r| r.expect("every point ran")).collect();
    fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    write_file(&common.out.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

pub fn cmd_scenario(args: &ScenarioArgs) -> Result<(), CliError> {
    let text = to_json(&default_scenario());
    match &args.out {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|r| {
            println!("{} ee={:e} status={} iterations={}", r.algorithm, r.ee, r.status, r.outer_iterations);
        }),
        Command::Sweep(a) => cmd_sweep(a).and_then(|rows| {
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} points, {failed} failed", rows.len());
            if failed > 0 {
                Err(CliError::Solve(format!("{failed} sweep point(s) failed")))
            } else {
                Ok(())
            }
        }),
        Command::Scenario(a) => cmd_scenario(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
