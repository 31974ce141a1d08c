//! The two convex subproblems of the alternating scheme: slot scheduling
//! (an LP plus rounding) and the joint trajectory / offloading / CPU step
//! built around a Taylor lower bound of the rate.

mod inner;
mod scheduling;
mod taylor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ScenarioConfig;

pub use inner::{
    build_inner, build_inner_program, init_slacks, Expansion, InnerLayout, InnerObjective, InnerOptions,
    InnerProgram, PropulsionBound,
};
pub use scheduling::{build_scheduling_lp, rate_floors, round_schedule, SchedulingLp};
pub use taylor::{gamma0, rate_lower_bound, taylor_rate_coeffs, TaylorCoeffs, TaylorEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubproblemError {
    #[error("user {user}: f_o*T - l_o*chi = {value:e} is not positive")]
    NonPositiveDenominator { user: usize, value: f64 },
    #[error("no binary schedule meets the rate floor of user {user}")]
    RepairFailed { user: usize },
    #[error("expansion point is infeasible: {0}")]
    InfeasibleExpansion(String),
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("scheduling LP has no interior point")]
    LpInfeasible,
}

/// Slot assignment weights `c[k][n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub c: Vec<Vec<f64>>,
}

impl Schedule {
    /// Binary schedule serving `served[n]` in slot `n`.
    pub fn from_served(served: &[usize], num_users: usize) -> Self {
        let mut c = vec![vec![0.0; served.len()]; num_users];
        for (n, &k) in served.iter().enumerate() {
            c[k][n] = 1.0;
        }
        Schedule { c }
    }

    pub fn uniform(num_users: usize, num_slots: usize) -> Self {
        Schedule {
            c: vec![vec![1.0 / num_users as f64; num_slots]; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.c.len()
    }

    pub fn num_slots(&self) -> usize {
        self.c.first().map_or(0, Vec::len)
    }

    /// Per-slot argmax; ties go to the lowest user index.
    pub fn served(&self) -> Vec<usize> {
        (0..self.num_slots())
            .map(|n| {
                let mut best = 0;
                for k in 1..self.num_users() {
                    if self.c[k][n] > self.c[best][n] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_binary(&self) -> bool {
        self.c.iter().flatten().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Largest `|Σ_k c[k][n] - 1|`.
    pub fn sum_violation(&self) -> f64 {
        (0..self.num_slots())
            .map(|n| (self.c.iter().map(|row| row[n]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_n c[k][n] Ř[k][n]` for each user.
    pub fn rate_sums(&self, rates: &[Vec<f64>]) -> Vec<f64> {
        self.c
            .iter()
            .zip(rates)
            .map(|(c, r)| c.iter().zip(r).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Average rate of every user over the mission, bits/s.
    pub fn average_rates(&self, rates: &[Vec<f64>]) -> Vec<f64> {
        let n = self.num_slots() as f64;
        self.rate_sums(rates).into_iter().map(|s| s / n).collect()
    }
}

/// Offloaded bits, local bits and server CPU share per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub l_offload: Vec<f64>,
    pub l_local: Vec<f64>,
    pub f_server: Vec<f64>,
}

impl Allocation {
    /// Minimum offload, nothing local, CPU split evenly.
    pub fn initial(cfg: &ScenarioConfig) -> Self {
        let k = cfg.num_users;
        Allocation {
            l_offload: cfg.i_k.clone(),
            l_local: vec![0.0; k],
            f_server: vec![cfg.c_o / k as f64; k],
        }
    }

    pub fn user_bits(&self) -> Vec<f64> {
        self.l_offload
            .iter()
            .zip(&self.l_local)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn total_bits(&self) -> f64 {
        self.user_bits().iter().sum()
    }

    pub fn min_user_bits(&self) -> f64 {
        self.user_bits().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Checks `l_o ≥ I_k`, `l_l ≥ 0`, `f_o > 0` and `Σ f_o ≤ C_o` with a
    /// relative tolerance; returns the first violation.
    pub fn violation(&self, cfg: &ScenarioConfig, rel_tol: f64) -> Option<String> {
        for k in 0..cfg.num_users {
            if self.l_offload[k] < cfg.i_k[k] * (1.0 - rel_tol) {
                return Some(format!("user {}: l_o below I_k", k + 1));
            }
            if self.l_local[k] < -rel_tol * cfg.i_k[k] {
                return Some(format!("user {}: negative l_l", k + 1));
            }
            if !(self.f_server[k] > 0.0) {
                return Some(format!("user {}: f_o not positive", k + 1));
            }
        }
        if self.f_server.iter().sum::<f64>() > cfg.c_o * (1.0 + rel_tol) {
            return Some("server CPU cap exceeded".into());
        }
        None
    }
}

/// Auxiliary variables of the inner program (bookkeeping: the squared
/// distances are substituted directly when the program is built).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackState {
    /// `‖q[n] - w_k‖² + H²`, m².
    pub y: Vec<Vec<f64>>,
    /// `‖q[n] - w_s‖² + H²`, m².
    pub p: Vec<f64>,
    /// Server-energy slack `≥ l_o f_o²`.
    pub u: Vec<f64>,
    /// Average-rate slack, bits/s.
    pub d_r: Vec<f64>,
}

/// Outcome of [`latency_satisfied`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyCheck {
    pub satisfied: bool,
    /// `T_k - max(local time, offload time)`, s.
    pub margin: f64,
}

/// Completion-time check of user `k` given its average uplink rate.
pub fn latency_satisfied(k: usize, alloc: &Allocation, avg_rate: f64, cfg: &ScenarioConfig) -> LatencyCheck {
    let chi = cfg.chi_k[k];
    let local = alloc.l_local[k] * chi / cfg.f_l_k[k];
    let lo = alloc.l_offload[k];
    let offload = if lo > 0.0 {
        lo * chi / alloc.f_server[k] + lo / avg_rate
    } else {
        0.0
    };
    let margin = cfg.t_k[k] - local.max(offload);
    LatencyCheck {
        satisfied: margin >= -1e-12 * cfg.t_k[k],
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;

    #[test]
    fn idle_user_has_full_margin() {
        let cfg = default_scenario();
        let alloc = Allocation {
            l_offload: vec![0.0; 4],
            l_local: vec![0.0; 4],
            f_server: vec![1.0; 4],
        };
        let c = latency_satisfied(0, &alloc, 0.0, &cfg);
        assert!(c.satisfied);
        assert_eq!(c.margin, cfg.t_k[0]);
    }

    #[test]
    fn slow_local_cpu_violates() {
        let mut cfg = default_scenario();
        cfg.chi_k[0] = 1.0;
        cfg.f_l_k[0] = 1.0;
        cfg.t_k[0] = 5.0;
        let alloc = Allocation {
            l_offload: vec![0.0; 4],
            l_local: vec![10.0, 0.0, 0.0, 0.0],
            f_server: vec![1.0; 4],
        };
        let c = latency_satisfied(0, &alloc, 1.0, &cfg);
        assert!(!c.satisfied);
        assert_eq!(c.margin, -5.0);
    }

    #[test]
    fn boundary_offload_has_zero_margin() {
        let cfg = default_scenario();
        let (f, r, t, chi) = (5e8, 2e6, cfg.t_k[0], cfg.chi_k[0]);
        // Bisection on l χ/f + l/R = T.
        let (mut lo, mut hi) = (0.0, 1e9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * chi / f + mid / r > t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let alloc = Allocation {
            l_offload: vec![lo, 0.0, 0.0, 0.0],
            l_local: vec![0.0; 4],
            f_server: vec![f, 1.0, 1.0, 1.0],
        };
        let c = latency_satisfied(0, &alloc, r, &cfg);
        assert!(c.satisfied);
        assert!(c.margin.abs() < 1e-9);
    }

    #[test]
    fn schedule_helpers() {
        let s = Schedule::from_served(&[1, 0, 1], 2);
        assert!(s.is_binary());
        assert_eq!(s.served(), vec![1, 0, 1]);
        assert_eq!(s.sum_violation(), 0.0);
        let frac = Schedule {
            c: vec![vec![0.6, 0.5], vec![0.4, 0.5]],
        };
        assert_eq!(frac.served(), vec![0, 0]);
        assert!(!frac.is_binary());
        let rates = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        assert_eq!(s.rate_sums(&rates), vec![2.0, 10.0]);
    }

    #[test]
    fn initial_allocation() {
        let cfg = default_scenario();
        let a = Allocation::initial(&cfg);
        assert_eq!(a.total_bits(), 4e6);
        assert!(a.violation(&cfg, 0.0).is_none());
        assert_eq!(a.f_server.iter().sum::<f64>(), cfg.c_o);
    }
}
