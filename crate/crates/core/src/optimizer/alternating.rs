use std::time::Instant;

use log::{debug, warn};

use crate::channel::{Link, PhaseConfig};
use crate::energy::EnergyBreakdown;
use crate::scenario::ScenarioConfig;
use crate::subproblems::{
    build_inner, build_scheduling_lp, init_slacks, round_schedule, Allocation, Expansion, InnerObjective,
    InnerOptions, Schedule, SlackState,
};
use crate::trajectory::Trajectory;

use super::dinkelbach::dinkelbach;
use super::{Algorithm, OptimizeError, ReportStatus, SolveReport};

/// Result of one convexify-and-solve step.
#[derive(Debug, Clone)]
pub struct SqaStep {
    pub trajectory: Trajectory,
    pub allocation: Allocation,
    pub slack: SlackState,
    /// True objective (exact propulsion energy) at the new point.
    pub objective: f64,
    /// Ratio of the convex surrogate at the new point.
    pub surrogate: f64,
    pub lambda_trace: Vec<f64>,
}

/// Uniform-speed straight line from `q0` to `qF`.
pub fn initial_trajectory(cfg: &ScenarioConfig) -> Result<Trajectory, OptimizeError> {
    Ok(Trajectory::straight_line(cfg)?)
}

pub(crate) fn true_objective(
    objective: InnerObjective,
    traj: &Trajectory,
    alloc: &Allocation,
    cfg: &ScenarioConfig,
) -> f64 {
    let energy = EnergyBreakdown::compute(traj, alloc, cfg).total_weighted;
    match objective {
        InnerObjective::TotalBits => alloc.total_bits() / energy,
        InnerObjective::MinUserBits => alloc.min_user_bits() / energy,
    }
}

fn dinkelbach_tol(tol: f64) -> f64 {
    (1e-2 * tol).min(1e-6)
}

/// Builds the ratio program around `expansion` for a fixed schedule and
/// solves it by Dinkelbach's method.
pub fn optimize_q_l_f(
    schedule: &Schedule,
    expansion: Expansion<'_>,
    opts: &InnerOptions,
    cfg: &ScenarioConfig,
    tol: f64,
) -> Result<SqaStep, OptimizeError> {
    let inner = build_inner(schedule, expansion, opts, cfg)?;
    let lambda0 = inner.fractional.ratio(&inner.start).max(0.0);
    let d = dinkelbach(&inner.fractional, &inner.start, lambda0, dinkelbach_tol(tol))?;
    let trajectory = inner.layout.trajectory(&d.x);
    let allocation = inner.layout.allocation(&d.x);
    let slack = inner.layout.slacks(&d.x, cfg);
    Ok(SqaStep {
        objective: true_objective(opts.objective, &trajectory, &allocation, cfg),
        trajectory,
        allocation,
        slack,
        surrogate: d.lambda,
        lambda_trace: d.lambda_trace,
    })
}

pub(crate) struct Variant {
    pub algorithm: Algorithm,
    pub opts: InnerOptions,
    pub initial: Trajectory,
}

fn next_schedule(
    traj: &Trajectory,
    alloc: &Allocation,
    prev: Option<&Schedule>,
    link: Link,
    cfg: &ScenarioConfig,
) -> Result<Schedule, OptimizeError> {
    let attempt = build_scheduling_lp(traj, alloc, link, cfg)
        .and_then(|lp| lp.solve(prev, 1e-8).and_then(|frac| round_schedule(&frac, &lp)));
    match (attempt, prev) {
        (Ok(s), _) => Ok(s),
        (Err(e), Some(p)) => {
            warn!("scheduling step failed ({e}); keeping the previous schedule");
            Ok(p.clone())
        }
        (Err(e), None) => Err(OptimizeError::Infeasible(e.to_string())),
    }
}

pub(crate) fn alternate(
    cfg: &ScenarioConfig,
    variant: Variant,
    tol: f64,
    max_outer: usize,
) -> Result<SolveReport, OptimizeError> {
    let started = Instant::now();
    cfg.validate()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(OptimizeError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    if max_outer == 0 {
        return Err(OptimizeError::Invalid("max_outer must be at least 1".into()));
    }
    let Variant {
        algorithm,
        opts,
        initial,
    } = variant;
    initial.validate(cfg, 1e-9)?;

    let mut traj = initial;
    let mut alloc = Allocation::initial(cfg);
    let mut objective = true_objective(opts.objective, &traj, &alloc, cfg);
    let mut trace = vec![objective];
    let mut lambda_traces = Vec::new();
    let mut schedule: Option<Schedule> = None;
    let mut status = ReportStatus::MaxOuter;
    let mut iterations = 0;

    for it in 1..=max_outer {
        iterations = it;
        let candidate = next_schedule(&traj, &alloc, schedule.as_ref(), opts.link, cfg)?;
        let slack = init_slacks(&traj, &alloc, &candidate, opts.link, cfg);
        let expansion = Expansion {
            traj: &traj,
            alloc: &alloc,
            slack: &slack,
        };
        let step = match optimize_q_l_f(&candidate, expansion, &opts, cfg, tol) {
            Ok(step) => step,
            Err(e) => {
                warn!("{algorithm}: inner step {it} failed ({e}); keeping the incumbent");
                schedule.get_or_insert(candidate);
                status = ReportStatus::Stalled;
                break;
            }
        };
        debug!(
            "{algorithm}: outer {it}: {:e} -> {:e} (surrogate {:e})",
            objective, step.objective, step.surrogate
        );
        lambda_traces.push(step.lambda_trace);
        if !(step.objective >= objective) {
            // The incumbent stays, with a schedule that is still valid for it.
            schedule.get_or_insert(candidate);
            let drop = (objective - step.objective) / objective;
            status = if drop < tol {
                ReportStatus::Converged
            } else {
                ReportStatus::Stalled
            };
            break;
        }
        let value = step.objective;
        let (t, a) = (step.trajectory, step.allocation);
        let change = (value - objective) / objective;
        traj = t;
        alloc = a;
        objective = value;
        schedule = Some(candidate);
        trace.push(objective);
        if change < tol {
            status = ReportStatus::Converged;
            break;
        }
    }

    let schedule = schedule.expect("at least one outer iteration");
    let phases = match opts.link {
        Link::RisCascade => Some(PhaseConfig::aligned(&traj.waypoints, &schedule.served(), cfg)),
        Link::DirectToUav => None,
    };
    let energy = EnergyBreakdown::compute(&traj, &alloc, cfg);
    Ok(SolveReport {
        algorithm,
        ee_trace: trace,
        lambda_traces,
        ee: alloc.total_bits() / energy.total_weighted,
        user_bits: alloc.user_bits(),
        trajectory: traj,
        schedule,
        phases,
        allocation: alloc,
        energy,
        status,
        outer_iterations: iterations,
        wall_time: started.elapsed(),
    })
}

/// Maximizes total bits over weighted energy by alternating the scheduling
/// LP with the convexified trajectory / offloading / CPU step.
pub fn algorithm1(cfg: &ScenarioConfig, tol: f64, max_outer: usize) -> Result<SolveReport, OptimizeError> {
    let variant = Variant {
        algorithm: Algorithm::MaxTotalEe,
        opts: InnerOptions::default(),
        initial: initial_trajectory(cfg)?,
    };
    alternate(cfg, variant, tol, max_outer)
}

/// Like [`algorithm1`] but maximizes the smallest per-user bit total over
/// the weighted energy. The report's `ee` is still total bits per joule;
/// `ee_trace` holds the min-user objective.
pub fn max_min_ee(cfg: &ScenarioConfig, tol: f64, max_outer: usize) -> Result<SolveReport, OptimizeError> {
    let variant = Variant {
        algorithm: Algorithm::MaxMinEe,
        opts: InnerOptions {
            objective: InnerObjective::MinUserBits,
            ..InnerOptions::default()
        },
        initial: initial_trajectory(cfg)?,
    };
    alternate(cfg, variant, tol, max_outer)
}

/// Scenario seen by the UAV-carried server: heavier airframe and a smaller
/// CPU budget.
pub fn uav_server_config(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut out = cfg.clone();
    out.rotor = cfg.rotor.with_mass(cfg.uav_server_mass);
    out.c_o = cfg.uav_server_cap();
    out
}

/// Baseline with the server on the UAV and direct user-to-UAV links.
pub fn uav_server(cfg: &ScenarioConfig, tol: f64, max_outer: usize) -> Result<SolveReport, OptimizeError> {
    let cfg = uav_server_config(cfg);
    let variant = Variant {
        algorithm: Algorithm::UavServer,
        opts: InnerOptions {
            link: Link::DirectToUav,
            ..InnerOptions::default()
        },
        initial: initial_trajectory(&cfg)?,
    };
    alternate(&cfg, variant, tol, max_outer)
}
