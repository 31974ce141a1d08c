//! Dinkelbach loop, the alternating scheduling / trajectory-allocation
//! scheme, its max-min variant, and the two baselines.

mod alternating;
mod dinkelbach;
mod feasibility;
mod heuristic;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PhaseConfig;
use crate::energy::EnergyBreakdown;
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::solver::SolveError;
use crate::subproblems::{Allocation, Schedule, SubproblemError};
use crate::trajectory::{Trajectory, TrajectoryError};

pub use alternating::{algorithm1, initial_trajectory, max_min_ee, optimize_q_l_f, uav_server, uav_server_config, SqaStep};
pub use dinkelbach::{dinkelbach, dinkelbach_partial, DinkelbachResult, MAX_LAMBDA_UPDATES};
pub use feasibility::{check_feasibility, FeasibilityReport};
pub use heuristic::{heuristic_traj, route_length, route_trajectory, shortest_route};

/// Relative EE change that ends the outer loop.
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_OUTER: usize = 50;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no Dinkelbach convergence after {updates} updates")]
    DinkelbachNoConvergence { updates: usize },
    #[error("route of {length:.1} m needs more than v_max over {time} s")]
    RouteTooLong { length: f64, time: f64 },
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MaxTotalEe,
    MaxMinEe,
    HeuristicTraj,
    UavServer,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::MaxTotalEe,
        Algorithm::MaxMinEe,
        Algorithm::HeuristicTraj,
        Algorithm::UavServer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MaxTotalEe => "max-total-ee",
            Algorithm::MaxMinEe => "max-min-ee",
            Algorithm::HeuristicTraj => "heuristic-traj",
            Algorithm::UavServer => "uav-server",
        }
    }

    /// Scenario the algorithm actually optimizes (the UAV-server baseline
    /// changes mass and CPU cap).
    pub fn effective_config(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        match self {
            Algorithm::UavServer => uav_server_config(cfg),
            _ => cfg.clone(),
        }
    }

    pub fn run(self, cfg: &ScenarioConfig, tol: f64, max_outer: usize) -> Result<SolveReport, OptimizeError> {
        match self {
            Algorithm::MaxTotalEe => algorithm1(cfg, tol, max_outer),
            Algorithm::MaxMinEe => max_min_ee(cfg, tol, max_outer),
            Algorithm::HeuristicTraj => heuristic_traj(cfg, tol, max_outer),
            Algorithm::UavServer => uav_server(cfg, tol, max_outer),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown algorithm `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportStatus {
    /// Relative objective change fell below the tolerance (a step that
    /// would lower the objective by less than that also counts; the
    /// incumbent is kept).
    Converged,
    /// The next step would have lowered the objective by more than the
    /// tolerance; the incumbent is kept.
    Stalled,
    MaxOuter,
}

impl fmt::Display for ReportStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportStatus::Converged => "converged",
            ReportStatus::Stalled => "stalled",
            ReportStatus::MaxOuter => "max-outer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    /// Objective after each accepted outer iteration, starting with the
    /// initialization point. Total EE, or min-user bits per joule for
    /// `max-min-ee`.
    pub ee_trace: Vec<f64>,
    /// Dinkelbach λ trace of every outer iteration that reached the inner
    /// step.
    pub lambda_traces: Vec<Vec<f64>>,
    pub trajectory: Trajectory,
    pub schedule: Schedule,
    /// `None` for the UAV-server baseline, which has no surface.
    pub phases: Option<PhaseConfig>,
    pub allocation: Allocation,
    pub energy: EnergyBreakdown,
    /// Total bits over weighted total energy at the final point.
    pub ee: f64,
    pub user_bits: Vec<f64>,
    pub status: ReportStatus,
    pub outer_iterations: usize,
    /// Excluded from equality and from every emitted file unless asked for.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn total_bits(&self) -> f64 {
        self.user_bits.iter().sum()
    }

    pub fn min_user_bits(&self) -> f64 {
        self.user_bits.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same report with the wall time zeroed, for bitwise comparisons.
    pub fn without_timing(&self) -> SolveReport {
        SolveReport {
            wall_time: Duration::ZERO,
            ..self.clone()
        }
    }
}
