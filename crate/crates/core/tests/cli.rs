use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use uris_mec::cli::sha256_hex;
use uris_mec::energy::energy_efficiency;
use uris_mec::optimizer::Algorithm;
use uris_mec::scenario::{default_scenario, load_scenario, to_json, Point};
use uris_mec::subproblems::Allocation;
use uris_mec::trajectory::Trajectory;

const BUNDLE: [&str; 8] = [
    "trajectory.csv",
    "schedule.csv",
    "allocation.json",
    "energy.json",
    "convergence.csv",
    "summary.json",
    "manifest.json",
    "scenario.json",
];

fn uris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uris-mec"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_trajectory(dir: &Path, delta_t: f64) -> Trajectory {
    let (_, rows) = csv_rows(&dir.join("trajectory.csv"));
    let pts = rows
        .iter()
        .map(|r| Point::new(r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    Trajectory::new(pts, delta_t)
}

fn read_allocation(dir: &Path) -> Allocation {
    let doc = json(&dir.join("allocation.json"));
    let users = doc["users"].as_array().unwrap();
    let col = |key: &str| users.iter().map(|u| u[key].as_f64().unwrap()).collect();
    Allocation {
        l_offload: col("l_o"),
        l_local: col("l_l"),
        f_server: col("f_o"),
    }
}

#[test]
fn run_bundle_recomputes_summary_ee() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r1");
    let o = uris(&["run", "--algorithm", "max-total-ee", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in BUNDLE {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let cfg = load_scenario(&fs::read_to_string(out.join("scenario.json")).unwrap()).unwrap();
    let traj = read_trajectory(&out, cfg.delta_t);
    let alloc = read_allocation(&out);
    let summary = json(&out.join("summary.json"));
    let ee = summary["ee"].as_f64().unwrap();
    let recomputed = energy_efficiency(&alloc, &traj, &cfg);
    assert!((ee - recomputed).abs() <= 1e-9 * ee, "{ee} vs {recomputed}");
    assert_eq!(summary["status"], "converged");

    let energy = json(&out.join("energy.json"));
    assert_eq!(energy["propulsion"].as_array().unwrap().len(), cfg.num_slots);
    let (header, rows) = csv_rows(&out.join("schedule.csv"));
    assert_eq!(header, ["n", "k"]);
    assert_eq!(rows.len(), cfg.num_slots);
    for r in &rows {
        let k: usize = r[1].parse().unwrap();
        assert!((1..=cfg.num_users).contains(&k));
    }

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["scenario_digest"], sha256_hex(&fs::read(out.join("scenario.json")).unwrap()));
    assert_eq!(manifest["algorithm"], "max-total-ee");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["max_outer"], 50);
    assert!(manifest["timestamps"].is_null());
}

#[test]
fn csv_files_use_scientific_notation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h");
    let o = uris(&["run", "--algorithm", "heuristic-traj", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(header, ["n", "x", "y", "vx", "vy", "ax", "ay"]);
    assert_eq!(rows.len(), default_scenario().num_slots + 1);
    for r in &rows {
        for field in &r[1..] {
            assert!(field.contains('e'), "{field}");
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:e}"), *field);
        }
    }
    let (header, rows) = csv_rows(&out.join("convergence.csv"));
    assert_eq!(header, ["outer_iter", "ee", "lambda_final"]);
    assert!(rows.len() >= 2);
    assert_eq!(rows[0][2], "NaN");
}

#[test]
fn collinear_heuristic_trajectory_is_a_line() {
    let mut cfg = default_scenario();
    cfg.w_k = [-450.0, -150.0, 150.0, 450.0].iter().map(|&x| Point::new(x, 50.0)).collect();
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("collinear.json");
    fs::write(&scn, to_json(&cfg)).unwrap();
    let out = tmp.path().join("out");
    let o = uris(&[
        "run",
        "--scenario",
        scn.to_str().unwrap(),
        "--algorithm",
        "heuristic-traj",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = read_trajectory(&out, cfg.delta_t);
    let (a, b) = (cfg.q0, cfg.q_final);
    let dir = (b - a).normalize();
    for q in &traj.waypoints {
        let d = q - a;
        let residual = (d.x * dir.y - d.y * dir.x).abs();
        assert!(residual < 1e-6, "{residual}");
    }
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("nowhere.json");
    let o = uris(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--algorithm",
        "max-total-ee",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(path.to_str().unwrap()), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn usage_errors() {
    assert_eq!(uris(&["sweep", "--values", "", "--out", "x"]).status.code(), Some(2));
    assert_eq!(uris(&["run", "--algorithm", "fastest", "--out", "x"]).status.code(), Some(2));
    assert_eq!(uris(&["run", "--algorithm", "max-total-ee", "--out", "x", "--tol", "0"]).status.code(), Some(2));
    assert_eq!(uris(&["sweep", "--values", "70.5", "--out", "x"]).status.code(), Some(2));
    assert_eq!(uris(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let sweep_dir = tmp.path().join("sweep");
    assert!(uris(&["run", "--algorithm", "uav-server", "--out", run_dir.to_str().unwrap()]).status.success());
    let o = uris(&[
        "sweep",
        "--values",
        "70",
        "--algorithms",
        "uav-server",
        "--out",
        sweep_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&sweep_dir.join("sweep.csv"));
    assert_eq!(header, ["algorithm", "T", "ee", "total_bits", "total_energy", "iters", "status"]);
    assert_eq!(rows.len(), 1);
    let summary = json(&run_dir.join("summary.json"));
    let row = &rows[0];
    assert_eq!(row[0], Algorithm::UavServer.name());
    assert_eq!(row[2].parse::<f64>().unwrap(), summary["ee"].as_f64().unwrap());
    assert_eq!(row[3].parse::<f64>().unwrap(), summary["total_bits"].as_f64().unwrap());
    assert_eq!(row[4].parse::<f64>().unwrap(), summary["total_energy"].as_f64().unwrap());
    assert_eq!(row[5].parse::<u64>().unwrap(), summary["outer_iterations"].as_u64().unwrap());
    let point = sweep_dir.join("uav-server").join("T70");
    for f in ["trajectory.csv", "schedule.csv", "allocation.json", "summary.json"] {
        assert_eq!(fs::read(point.join(f)).unwrap(), fs::read(run_dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_records_failures_and_continues() {
    // A mission time too short for the heuristic's route becomes a status row.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = uris(&[
        "sweep",
        "--values",
        "30,40",
        "--algorithms",
        "heuristic-traj",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let (_, rows) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][6], "failed");
    assert_eq!(rows[0][2], "NaN");
    assert_ne!(rows[1][6], "failed");
    assert!(out.join("heuristic-traj").join("T40").join("summary.json").is_file());
}

#[test]
fn timestamps_are_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let o = uris(&[
        "run",
        "--algorithm",
        "heuristic-traj",
        "--timestamps",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let manifest = json(&out.join("manifest.json"));
    assert!(manifest["timestamps"]["started_unix_s"].as_f64().unwrap() > 0.0);
    assert!(json(&out.join("summary.json"))["wall_time_s"].is_number());
}

#[test]
fn scenario_subcommand_prints_a_loadable_default() {
    let o = uris(&["scenario"]);
    assert!(o.status.success());
    let cfg = load_scenario(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, default_scenario());
}
