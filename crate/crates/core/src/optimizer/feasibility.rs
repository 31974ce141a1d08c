use crate::channel::{direct_rate, instantaneous_rate};
use crate::scenario::ScenarioConfig;
use crate::subproblems::latency_satisfied;

use super::{Algorithm, SolveReport};

/// Relative violation of every constraint family at a reported solution
/// (0 when satisfied).
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<(String, f64)>,
}

impl FeasibilityReport {
    pub fn max(&self) -> f64 {
        self.violations.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.violations.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Re-evaluates a report from scratch: schedule structure, mobility,
/// radius, offload and CPU bounds, and completion times with the reported
/// phases (or the direct link for the UAV-server baseline). `cfg` is the
/// scenario passed to the algorithm.
pub fn check_feasibility(report: &SolveReport, cfg: &ScenarioConfig) -> FeasibilityReport {
    let cfg = &report.algorithm.effective_config(cfg);
    let (k_users, n) = (cfg.num_users, cfg.num_slots);
    let mut out = Vec::new();
    let mut push = |name: &str, v: f64| out.push((name.to_string(), v.max(0.0)));

    let c = &report.schedule.c;
    let mut binary = 0.0f64;
    let mut sums = 0.0f64;
    for s in 0..n {
        let mut total = 0.0;
        for row in c.iter() {
            binary = binary.max(row[s].min(1.0 - row[s]).abs());
            total += row[s];
        }
        sums = sums.max((total - 1.0).abs());
    }
    push("schedule binary", binary);
    push("schedule sum", sums);

    let traj = &report.trajectory;
    let scale = cfg.r_d.max(1.0);
    push("start", (traj.waypoints[0] - cfg.q0).norm() / scale);
    push("end", (traj.waypoints[n] - cfg.q_final).norm() / scale);
    let speed = traj.velocities().iter().map(|v| v.norm()).fold(0.0, f64::max);
    push("speed", speed / cfg.v_max - 1.0);
    let accel = traj.accelerations().iter().map(|a| a.norm()).fold(0.0, f64::max);
    push("acceleration", accel / cfg.a_max - 1.0);
    let radius = traj.waypoints.iter().map(|q| q.norm()).fold(0.0, f64::max);
    push("radius", radius / cfg.r_d - 1.0);

    let alloc = &report.allocation;
    let mut offload = 0.0f64;
    let mut local = 0.0f64;
    let mut cpu_pos = 0.0f64;
    for k in 0..k_users {
        offload = offload.max(1.0 - alloc.l_offload[k] / cfg.i_k[k]);
        local = local.max(-alloc.l_local[k] / cfg.i_k[k]);
        if !(alloc.f_server[k] > 0.0) {
            cpu_pos = 1.0;
        }
    }
    push("offload minimum", offload);
    push("local bits", local);
    push("server cpu positive", cpu_pos);
    push("server cpu cap", alloc.f_server.iter().sum::<f64>() / cfg.c_o - 1.0);

    let mut latency = 0.0f64;
    for k in 0..k_users {
        let total: f64 = (0..n)
            .map(|s| {
                let q = &traj.waypoints[s];
                match (&report.phases, report.algorithm) {
                    (_, Algorithm::UavServer) => c[k][s] * direct_rate(q, k, cfg),
                    (Some(ph), _) => instantaneous_rate(c[k][s], q, &ph.theta[s], k, cfg),
                    (None, _) => f64::NAN,
                }
            })
            .sum();
        let check = latency_satisfied(k, alloc, total / n as f64, cfg);
        let v = -check.margin / cfg.t_k[k];
        latency = if v.is_nan() { f64::INFINITY } else { latency.max(v) };
    }
    push("latency", latency);
    FeasibilityReport { violations: out }
}
