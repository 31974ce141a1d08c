//! Relaxed slot-scheduling LP and its rounding.
//!
//! The per-slot equality `Σ_k c[k][n] = 1` is eliminated by writing the last
//! user's weight as `1 - Σ_{k<K} c[k][n]`, so the remaining program has only
//! inequalities and a nonempty interior.

use crate::channel::Link;
use crate::scenario::ScenarioConfig;
use crate::solver::{find_strictly_feasible, solve, ConvexProgram, Term};
use crate::trajectory::Trajectory;

use super::{Allocation, Schedule, SubproblemError};

/// Relaxed scheduling LP over the first `K - 1` users' weights.
#[derive(Debug, Clone)]
pub struct SchedulingLp {
    pub program: ConvexProgram,
    /// `Ř[k][n]`, bits/s.
    pub rates: Vec<Vec<f64>>,
    /// Required `Σ_n c[k][n] Ř[k][n]` per user.
    pub floors: Vec<f64>,
}

/// `N f_o l_o / (f_o T_k - l_o χ_k)` per user.
pub fn rate_floors(alloc: &Allocation, cfg: &ScenarioConfig) -> Result<Vec<f64>, SubproblemError> {
    (0..cfg.num_users)
        .map(|k| {
            let (l, f) = (alloc.l_offload[k], alloc.f_server[k]);
            let den = f * cfg.t_k[k] - l * cfg.chi_k[k];
            if !(den > 0.0) {
                return Err(SubproblemError::NonPositiveDenominator { user: k + 1, value: den });
            }
            Ok(cfg.num_slots as f64 * f * l / den)
        })
        .collect()
}

/// LP along `traj` for the given allocation.
pub fn build_scheduling_lp(
    traj: &Trajectory,
    alloc: &Allocation,
    link: Link,
    cfg: &ScenarioConfig,
) -> Result<SchedulingLp, SubproblemError> {
    let floors = rate_floors(alloc, cfg)?;
    let rates = link.rate_table(&traj.waypoints, cfg);
    Ok(SchedulingLp::new(rates, floors))
}

impl SchedulingLp {
    /// LP for an explicit rate table `rates[k][n]`.
    pub fn new(rates: Vec<Vec<f64>>, floors: Vec<f64>) -> Self {
        let k_users = rates.len();
        let n = rates.first().map_or(0, Vec::len);
        let last = k_users - 1;
        let mut p = ConvexProgram::new();
        p.add_block("c", last * n, 0.0, 1.0, 1.0);
        let var = |k: usize, s: usize| k * n + s;

        let base: f64 = rates[last].iter().sum();
        let mut vars = Vec::new();
        let mut coeffs = Vec::new();
        for k in 0..last {
            for s in 0..n {
                vars.push(var(k, s));
                coeffs.push(rates[k][s] - rates[last][s]);
            }
        }
        p.add_objective(Term::affine(vars, coeffs, base));
        p.objective_scale = (0..n)
            .map(|s| rates.iter().map(|r| r[s]).fold(0.0, f64::max))
            .sum::<f64>()
            .max(1.0);

        if k_users > 2 {
            for s in 0..n {
                let vars: Vec<usize> = (0..last).map(|k| var(k, s)).collect();
                p.add_constraint(format!("slot {}", s + 1), vec![Term::affine(vars, vec![1.0; last], -1.0)]);
            }
        }
        for k in 0..k_users {
            let term = if k < last {
                let vars = (0..n).map(|s| var(k, s)).collect();
                let coeffs = rates[k].iter().map(|r| -r).collect();
                Term::affine(vars, coeffs, floors[k])
            } else {
                let mut vars = Vec::new();
                let mut coeffs = Vec::new();
                for j in 0..last {
                    for s in 0..n {
                        vars.push(var(j, s));
                        coeffs.push(rates[last][s]);
                    }
                }
                Term::affine(vars, coeffs, floors[k] - base)
            };
            p.add_constraint(format!("rate floor {}", k + 1), vec![term]);
        }
        SchedulingLp {
            program: p,
            rates,
            floors,
        }
    }

    pub fn num_users(&self) -> usize {
        self.rates.len()
    }

    pub fn num_slots(&self) -> usize {
        self.rates.first().map_or(0, Vec::len)
    }

    pub fn schedule_from(&self, x: &[f64]) -> Schedule {
        let (k_users, n) = (self.num_users(), self.num_slots());
        let mut c = vec![vec![0.0; n]; k_users];
        for s in 0..n {
            let mut rest = 1.0;
            for k in 0..k_users - 1 {
                c[k][s] = x[k * n + s];
                rest -= c[k][s];
            }
            c[k_users - 1][s] = rest;
        }
        Schedule { c }
    }

    pub fn point_from(&self, schedule: &Schedule) -> Vec<f64> {
        schedule.c[..self.num_users() - 1].iter().flatten().copied().collect()
    }

    /// `Σ c Ř` of a schedule.
    pub fn objective(&self, schedule: &Schedule) -> f64 {
        schedule.rate_sums(&self.rates).iter().sum()
    }

    pub fn meets_floors(&self, schedule: &Schedule) -> bool {
        schedule
            .rate_sums(&self.rates)
            .iter()
            .zip(&self.floors)
            .all(|(s, f)| s >= f)
    }

    /// Fractional optimum, started near `warm` (or the uniform schedule).
    pub fn solve(&self, warm: Option<&Schedule>, tol: f64) -> Result<Schedule, SubproblemError> {
        let (k_users, n) = (self.num_users(), self.num_slots());
        if k_users == 1 {
            let all = Schedule::from_served(&vec![0; n], 1);
            return if self.meets_floors(&all) {
                Ok(all)
            } else {
                Err(SubproblemError::LpInfeasible)
            };
        }
        let uniform = Schedule::uniform(k_users, n);
        let eps = 1e-3;
        let x0: Vec<f64> = match warm {
            Some(w) => self
                .point_from(w)
                .iter()
                .zip(self.point_from(&uniform))
                .map(|(a, b)| (1.0 - eps) * a + eps * b)
                .collect(),
            None => self.point_from(&uniform),
        };
        let start = find_strictly_feasible(&self.program, &x0).map_err(|_| SubproblemError::LpInfeasible)?;
        let sol = solve(&self.program, &start, tol).map_err(|_| SubproblemError::LpInfeasible)?;
        Ok(self.schedule_from(&sol.x))
    }
}

/// Per-slot argmax, then a greedy repair that hands floor-violating users
/// the slots where their rate is largest, taking only from users that stay
/// above their own floors.
pub fn round_schedule(fractional: &Schedule, lp: &SchedulingLp) -> Result<Schedule, SubproblemError> {
    let k_users = lp.num_users();
    let mut served = fractional.served();
    let mut sums = vec![0.0; k_users];
    for (s, &k) in served.iter().enumerate() {
        sums[k] += lp.rates[k][s];
    }
    for k in 0..k_users {
        if sums[k] >= lp.floors[k] {
            continue;
        }
        let mut slots: Vec<usize> = (0..served.len()).filter(|&s| served[s] != k).collect();
        slots.sort_by(|&a, &b| lp.rates[k][b].total_cmp(&lp.rates[k][a]).then(a.cmp(&b)));
        for s in slots {
            if sums[k] >= lp.floors[k] {
                break;
            }
            let donor = served[s];
            if sums[donor] - lp.rates[donor][s] >= lp.floors[donor] {
                sums[donor] -= lp.rates[donor][s];
                sums[k] += lp.rates[k][s];
                served[s] = k;
            }
        }
        if sums[k] < lp.floors[k] {
            return Err(SubproblemError::RepairFailed { user: k + 1 });
        }
    }
    Ok(Schedule::from_served(&served, k_users))
}
