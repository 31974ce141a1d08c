//! The joint trajectory / offloading / CPU-share step for a fixed schedule.
//!
//! Squared hop distances are substituted directly into the Taylor bound.
//! Because both partial derivatives of the bound are nonpositive, this is
//! equivalent to keeping `y ≥ ‖q - w_k‖² + H²` and `p ≥ ‖q - w_s‖² + H²`
//! as separate slack constraints, with fewer variables.

use std::sync::Arc;

use crate::channel::Link;
use crate::energy::propulsion_energy;
use crate::scenario::{Point, RotorParams, ScenarioConfig};
use crate::solver::{find_strictly_feasible, ConvexProgram, FractionalProgram, Mapped, QuadOverLin, SmoothFn, SquaredNorm, Term};
use crate::trajectory::Trajectory;

use super::taylor::TaylorEntry;
use super::{Allocation, Schedule, SlackState, SubproblemError};

/// Smoothing of `‖a‖` inside the propulsion bound, m/s².
const ACCEL_SMOOTHING: f64 = 1e-3;

/// Convex per-slot propulsion bound as a function of `(v_x, v_y, a_x, a_y)`,
/// with `‖a‖` replaced by `sqrt(‖a‖² + ε²)` so it is twice differentiable.
/// The smoothing only increases the value, so it stays an upper bound.
#[derive(Debug, Clone)]
pub struct PropulsionBound {
    pub rotor: RotorParams,
    pub delta_t: f64,
    pub eps: f64,
}

impl PropulsionBound {
    pub fn new(rotor: RotorParams, delta_t: f64) -> Self {
        PropulsionBound {
            rotor,
            delta_t,
            eps: ACCEL_SMOOTHING,
        }
    }
}

impl SmoothFn for PropulsionBound {
    fn arity(&self) -> usize {
        4
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let r = &self.rotor;
        let dt = self.delta_t;
        let (vx, vy, ax, ay) = (z[0], z[1], z[2], z[3]);
        let s = vx * vx + vy * vy;
        let speed = s.sqrt();
        let na = (ax * ax + ay * ay + self.eps * self.eps).sqrt();
        let c2 = 3.0 * r.p0 / (r.u_tip * r.u_tip);
        let c3 = 0.5 * r.d0 * r.rho * r.s_sol * r.a_disc;
        let rs = r.rho * r.s_fp;
        let den2 = (2.0 * r.mass * r.g).powi(2);
        let h = 2.0 * r.mass * na + rs * s;
        let value = dt * (r.p0 + c2 * s + c3 * s * speed + r.p_i * (1.0 + h * h / den2));

        // ∇h and ∇²h in (v, a).
        let dh = [2.0 * rs * vx, 2.0 * rs * vy, 2.0 * r.mass * ax / na, 2.0 * r.mass * ay / na];
        let k = r.p_i / den2;
        if let Some(g) = grad {
            g[0] = dt * (2.0 * c2 * vx + 3.0 * c3 * speed * vx + 2.0 * k * h * dh[0]);
            g[1] = dt * (2.0 * c2 * vy + 3.0 * c3 * speed * vy + 2.0 * k * h * dh[1]);
            g[2] = dt * 2.0 * k * h * dh[2];
            g[3] = dt * 2.0 * k * h * dh[3];
        }
        if let Some(hm) = hess {
            let mut d2h = [0.0; 16];
            d2h[0] = 2.0 * rs;
            d2h[5] = 2.0 * rs;
            let na3 = na * na * na;
            let m2 = 2.0 * r.mass;
            d2h[10] = m2 * (1.0 / na - ax * ax / na3);
            d2h[11] = -m2 * ax * ay / na3;
            d2h[14] = d2h[11];
            d2h[15] = m2 * (1.0 / na - ay * ay / na3);
            for i in 0..4 {
                for j in 0..4 {
                    hm[i * 4 + j] = dt * 2.0 * k * (dh[i] * dh[j] + h * d2h[i * 4 + j]);
                }
            }
            // Profile term and the convex ‖v‖³ term.
            let cube = |i: usize, j: usize| {
                let vi = z[i];
                let vj = z[j];
                let diag = if i == j { speed } else { 0.0 };
                if speed > 0.0 {
                    3.0 * c3 * (diag + vi * vj / speed)
                } else {
                    0.0
                }
            };
            for i in 0..2 {
                for j in 0..2 {
                    let profile = if i == j { 2.0 * c2 } else { 0.0 };
                    hm[i * 4 + j] += dt * (profile + cube(i, j));
                }
            }
        }
        value
    }
}

/// What the fractional numerator counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerObjective {
    /// `Σ_k (l_o + l_l)`.
    TotalBits,
    /// Epigraph variable below every user's bit total.
    MinUserBits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InnerOptions {
    pub link: Link,
    /// Keep the expansion trajectory fixed and optimize `(l, f)` only.
    pub freeze_trajectory: bool,
    pub objective: InnerObjective,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            link: Link::RisCascade,
            freeze_trajectory: false,
            objective: InnerObjective::TotalBits,
        }
    }
}

/// Point the program is built around.
#[derive(Debug, Clone, Copy)]
pub struct Expansion<'a> {
    pub traj: &'a Trajectory,
    pub alloc: &'a Allocation,
    pub slack: &'a SlackState,
}

/// Where each quantity lives in the variable vector.
#[derive(Debug, Clone)]
pub struct InnerLayout {
    /// Interior waypoints `q[2..=N]`, interleaved `(x, y)`; `None` when frozen.
    pub q: Option<usize>,
    pub l_o: usize,
    pub l_l: usize,
    pub f_o: usize,
    pub u: usize,
    pub d_r: usize,
    pub l_min: Option<usize>,
    pub num_users: usize,
    /// Expansion trajectory (supplies fixed waypoints).
    pub base: Trajectory,
}

impl InnerLayout {
    fn waypoint_var(&self, i: usize, axis: usize) -> Option<usize> {
        let start = self.q?;
        let n = self.base.num_slots();
        (i != 0 && i != n).then(|| start + 2 * (i - 1) + axis)
    }

    /// Affine map from the variables to `rows`, each row `Σ c q[i][axis]`.
    fn map(&self, rows: &[(usize, Vec<(usize, f64)>)]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let mut vars: Vec<usize> = Vec::new();
        for (axis, entries) in rows {
            for &(i, _) in entries {
                if let Some(v) = self.waypoint_var(i, *axis) {
                    if !vars.contains(&v) {
                        vars.push(v);
                    }
                }
            }
        }
        let cols = vars.len();
        let mut matrix = vec![0.0; rows.len() * cols];
        let mut shift = vec![0.0; rows.len()];
        for (r, (axis, entries)) in rows.iter().enumerate() {
            for &(i, c) in entries {
                match self.waypoint_var(i, *axis) {
                    Some(v) => {
                        let col = vars.iter().position(|&x| x == v).unwrap();
                        matrix[r * cols + col] += c;
                    }
                    None => shift[r] += c * self.base.waypoints[i][*axis],
                }
            }
        }
        (vars, matrix, shift)
    }

    fn mapped_term(&self, rows: &[(usize, Vec<(usize, f64)>)], weight: f64, inner: Arc<dyn SmoothFn>) -> Term {
        let (vars, matrix, shift) = self.map(rows);
        let cols = vars.len();
        Term::new(vars, weight, Arc::new(Mapped::new(rows.len(), cols, matrix, shift, inner)))
    }

    pub fn trajectory(&self, x: &[f64]) -> Trajectory {
        let mut traj = self.base.clone();
        if self.q.is_some() {
            for i in 1..traj.num_slots() {
                let (vx, vy) = (self.waypoint_var(i, 0).unwrap(), self.waypoint_var(i, 1).unwrap());
                traj.waypoints[i] = Point::new(x[vx], x[vy]);
            }
        }
        traj
    }

    pub fn allocation(&self, x: &[f64]) -> Allocation {
        let k = self.num_users;
        Allocation {
            l_offload: x[self.l_o..self.l_o + k].to_vec(),
            l_local: x[self.l_l..self.l_l + k].to_vec(),
            f_server: x[self.f_o..self.f_o + k].to_vec(),
        }
    }

    pub fn slacks(&self, x: &[f64], cfg: &ScenarioConfig) -> SlackState {
        let traj = self.trajectory(x);
        let k = self.num_users;
        let mut s = distance_slacks(&traj, cfg);
        s.u = x[self.u..self.u + k].to_vec();
        s.d_r = x[self.d_r..self.d_r + k].to_vec();
        s
    }
}

/// A built inner program, its layout and a strictly feasible start.
#[derive(Debug, Clone)]
pub struct InnerProgram {
    pub fractional: FractionalProgram,
    pub layout: InnerLayout,
    pub start: Vec<f64>,
    /// Expansion of the rate bound per user and slot.
    pub taylor: Vec<Vec<TaylorEntry>>,
}

fn distance_slacks(traj: &Trajectory, cfg: &ScenarioConfig) -> SlackState {
    let n = cfg.num_slots;
    let h2 = cfg.altitude * cfg.altitude;
    let y = (0..cfg.num_users)
        .map(|k| (0..n).map(|s| (traj.waypoints[s] - cfg.w_k[k]).norm_squared() + h2).collect())
        .collect();
    let p = (0..n).map(|s| (traj.waypoints[s] - cfg.w_s).norm_squared() + h2).collect();
    SlackState {
        y,
        p,
        u: Vec::new(),
        d_r: Vec::new(),
    }
}

/// Slacks tight at `(traj, alloc)`: exact squared distances,
/// `u = l_o f_o²` and `d_r` equal to the average rate under `schedule`.
pub fn init_slacks(
    traj: &Trajectory,
    alloc: &Allocation,
    schedule: &Schedule,
    link: Link,
    cfg: &ScenarioConfig,
) -> SlackState {
    let mut s = distance_slacks(traj, cfg);
    s.u = alloc
        .l_offload
        .iter()
        .zip(&alloc.f_server)
        .map(|(l, f)| l * f * f)
        .collect();
    s.d_r = schedule.average_rates(&link.rate_table(&traj.waypoints, cfg));
    s
}

/// Parametric program `max N - λ D` at the expansion point.
pub fn build_inner_program(
    lambda: f64,
    schedule: &Schedule,
    expansion: Expansion<'_>,
    opts: &InnerOptions,
    cfg: &ScenarioConfig,
) -> Result<ConvexProgram, SubproblemError> {
    if !(lambda >= 0.0) {
        return Err(SubproblemError::NegativeLambda(lambda));
    }
    Ok(build_inner(schedule, expansion, opts, cfg)?.fractional.parametric(lambda))
}

/// Builds the ratio program around `expansion` for a fixed schedule.
pub fn build_inner(
    schedule: &Schedule,
    expansion: Expansion<'_>,
    opts: &InnerOptions,
    cfg: &ScenarioConfig,
) -> Result<InnerProgram, SubproblemError> {
    let k_users = cfg.num_users;
    let n = cfg.num_slots;
    let dt = cfg.delta_t;
    let h2 = cfg.altitude * cfg.altitude;
    let traj = expansion.traj;
    let alloc = expansion.alloc;
    if traj.num_slots() != n {
        return Err(SubproblemError::InfeasibleExpansion(format!(
            "trajectory has {} slots, expected {n}",
            traj.num_slots()
        )));
    }
    let movable = !opts.freeze_trajectory && n >= 2;

    let mut p = ConvexProgram::new();
    let q = movable.then(|| p.add_block("q", 2 * (n - 1), f64::NEG_INFINITY, f64::INFINITY, (0.1 * cfg.r_d).max(1.0)));
    let l_o = p.add_block("l_o", k_users, 0.0, f64::INFINITY, 1.0);
    let l_l = p.add_block("l_l", k_users, 0.0, f64::INFINITY, 1.0);
    let f_o = p.add_block("f_o", k_users, 0.0, cfg.c_o, cfg.c_o / k_users as f64);
    let u = p.add_block("u", k_users, 0.0, f64::INFINITY, 1.0);
    let d_r = p.add_block("d_r", k_users, 0.0, f64::INFINITY, cfg.bandwidth);
    let l_min = (opts.objective == InnerObjective::MinUserBits).then(|| {
        let mean = cfg.i_k.iter().sum::<f64>() / k_users as f64;
        p.add_block("l_min", 1, 0.0, f64::INFINITY, mean.max(1.0))
    });
    let layout = InnerLayout {
        q,
        l_o,
        l_l,
        f_o,
        u,
        d_r,
        l_min,
        num_users: k_users,
        base: traj.clone(),
    };

    // Expansion values and start point.
    let mut x0 = vec![0.0; p.dim()];
    if movable {
        for i in 1..n {
            x0[layout.waypoint_var(i, 0).unwrap()] = traj.waypoints[i].x;
            x0[layout.waypoint_var(i, 1).unwrap()] = traj.waypoints[i].y;
        }
    }
    let mut l_t = vec![0.0; k_users];
    let f_sum: f64 = alloc.f_server.iter().sum();
    let f_shrink = if f_sum >= cfg.c_o { cfg.c_o / f_sum * (1.0 - 1e-6) } else { 1.0 };
    for k in 0..k_users {
        let floor = cfg.i_k[k];
        l_t[k] = alloc.l_offload[k].max(floor * (1.0 + 1e-6)).max(1.0);
        let l_max = cfg.t_k[k] * cfg.f_l_k[k] / cfg.chi_k[k];
        let f = (alloc.f_server[k] * f_shrink).clamp(1e-9 * cfg.c_o, cfg.c_o * (1.0 - 1e-6));

        p.lower[l_o + k] = floor;
        p.scales[l_o + k] = floor.max(1.0);
        p.upper[l_l + k] = l_max;
        p.scales[l_l + k] = l_max.max(1.0);
        p.upper[u + k] = 8.0 * l_t[k] * cfg.c_o * cfg.c_o;
        p.scales[u + k] = (l_t[k] * f * f).max(1.0);

        x0[l_o + k] = l_t[k];
        x0[l_l + k] = alloc.l_local[k].clamp(1e-6 * l_max, l_max * (1.0 - 1e-6));
        x0[f_o + k] = f;
        x0[u + k] = (1.0 + 1e-3) * l_t[k] * f * f;
    }

    // Rate bound expansion along the expansion trajectory.
    let taylor: Vec<Vec<TaylorEntry>> = (0..k_users)
        .map(|k| {
            let xi = opts.link.snr_constant(k, cfg);
            (0..n)
                .map(|s| {
                    let q = traj.waypoints[s];
                    let y_t = (q - cfg.w_k[k]).norm_squared() + h2;
                    let p_t = match opts.link {
                        Link::RisCascade => (q - cfg.w_s).norm_squared() + h2,
                        Link::DirectToUav => 1.0,
                    };
                    TaylorEntry::at(xi, cfg.alpha_l, p_t, y_t)
                })
                .collect()
        })
        .collect();

    for k in 0..k_users {
        let avg: f64 = (0..n)
            .map(|s| schedule.c[k][s] * cfg.bandwidth * taylor[k][s].c)
            .sum::<f64>()
            / n as f64;
        let (l, f) = (x0[l_o + k], x0[f_o + k]);
        let slack = cfg.t_k[k] - cfg.chi_k[k] * l / f;
        let required = if slack > 0.0 { l / slack } else { f64::INFINITY };
        x0[d_r + k] = if required < avg {
            0.5 * (required + avg)
        } else {
            avg * (1.0 - 1e-6)
        };
    }
    if let Some(lm) = l_min {
        let least = (0..k_users)
            .map(|k| x0[l_o + k] + x0[l_l + k])
            .fold(f64::INFINITY, f64::min);
        x0[lm] = least * (1.0 - 1e-6);
    }

    // Mobility.
    if movable {
        let vlim = (cfg.v_max * dt).powi(2);
        let alim = (cfg.a_max * dt * dt).powi(2);
        let norm0 = |offset: f64| -> Arc<dyn SmoothFn> {
            Arc::new(SquaredNorm {
                center: vec![0.0, 0.0],
                offset,
            })
        };
        for s in 0..n {
            let diff = vec![(s + 1, 1.0), (s, -1.0)];
            let rows = [(0, diff.clone()), (1, diff)];
            if layout.map(&rows).0.is_empty() {
                continue;
            }
            p.add_constraint(format!("speed slot {}", s + 1), vec![layout.mapped_term(&rows, 1.0, norm0(-vlim))]);
        }
        for s in 0..n.saturating_sub(1) {
            let second = vec![(s + 2, 1.0), (s + 1, -2.0), (s, 1.0)];
            let rows = [(0, second.clone()), (1, second)];
            p.add_constraint(format!("acceleration slot {}", s + 1), vec![layout.mapped_term(&rows, 1.0, norm0(-alim))]);
        }
        for i in 1..n {
            let vars = vec![layout.waypoint_var(i, 0).unwrap(), layout.waypoint_var(i, 1).unwrap()];
            p.add_constraint(
                format!("radius waypoint {}", i + 1),
                vec![Term::new(vars, 1.0, norm0(-cfg.r_d * cfg.r_d))],
            );
        }
    }

    // Average rate below the Taylor bound.
    for k in 0..k_users {
        let mut terms = vec![Term::affine(vec![d_r + k], vec![1.0], 0.0)];
        let mut constant = 0.0;
        for s in 0..n {
            let c = schedule.c[k][s];
            if c == 0.0 {
                continue;
            }
            let w = -cfg.bandwidth * c / n as f64;
            let e = &taylor[k][s];
            constant += w * e.c;
            if layout.waypoint_var(s, 0).is_none() {
                continue;
            }
            let vars = vec![layout.waypoint_var(s, 0).unwrap(), layout.waypoint_var(s, 1).unwrap()];
            if opts.link == Link::RisCascade {
                let hop = Arc::new(SquaredNorm {
                    center: vec![cfg.w_s.x, cfg.w_s.y],
                    offset: h2 - e.p_t,
                });
                terms.push(Term::new(vars.clone(), w * e.a, hop));
            }
            let hop = Arc::new(SquaredNorm {
                center: vec![cfg.w_k[k].x, cfg.w_k[k].y],
                offset: h2 - e.y_t,
            });
            terms.push(Term::new(vars, w * e.b, hop));
        }
        terms.push(Term::constant(constant));
        p.add_constraint(format!("rate user {}", k + 1), terms);
    }

    // Offload latency, multiplied through by l_o.
    let qol: Arc<dyn SmoothFn> = Arc::new(QuadOverLin);
    for k in 0..k_users {
        p.add_constraint(
            format!("latency user {}", k + 1),
            vec![
                Term::new(vec![l_o + k, d_r + k], 1.0, qol.clone()),
                Term::new(vec![l_o + k, f_o + k], cfg.chi_k[k], qol.clone()),
                Term::affine(vec![l_o + k], vec![-cfg.t_k[k]], 0.0),
            ],
        );
    }

    p.add_constraint(
        "server CPU cap",
        vec![Term::affine((f_o..f_o + k_users).collect(), vec![1.0; k_users], -cfg.c_o)],
    );

    // u ≥ l_o f_o² through the tangent of 1/l_o.
    for k in 0..k_users {
        let lt = l_t[k];
        p.add_constraint(
            format!("server energy user {}", k + 1),
            vec![
                Term::new(vec![f_o + k, u + k], 1.0, qol.clone()),
                Term::affine(vec![l_o + k], vec![1.0 / (lt * lt)], -2.0 / lt),
            ],
        );
    }

    if let Some(lm) = l_min {
        for k in 0..k_users {
            p.add_constraint(
                format!("min bits user {}", k + 1),
                vec![Term::affine(vec![lm, l_o + k, l_l + k], vec![1.0, -1.0, -1.0], 0.0)],
            );
        }
    }

    let numerator = match l_min {
        Some(lm) => vec![Term::affine(vec![lm], vec![1.0], 0.0)],
        None => {
            let vars: Vec<usize> = (l_o..l_o + k_users).chain(l_l..l_l + k_users).collect();
            let ones = vec![1.0; vars.len()];
            vec![Term::affine(vars, ones, 0.0)]
        }
    };

    let mut denominator = Vec::new();
    if movable {
        let bound: Arc<dyn SmoothFn> = Arc::new(PropulsionBound::new(cfg.rotor.clone(), dt));
        for s in 0..n {
            let v = vec![(s + 1, 1.0 / dt), (s, -1.0 / dt)];
            let a = if s + 2 <= n {
                vec![(s + 2, 1.0 / (dt * dt)), (s + 1, -2.0 / (dt * dt)), (s, 1.0 / (dt * dt))]
            } else {
                Vec::new()
            };
            let rows = [(0, v.clone()), (1, v), (0, a.clone()), (1, a)];
            denominator.push(layout.mapped_term(&rows, cfg.alpha_w, bound.clone()));
        }
    } else {
        let vel = traj.velocities();
        let acc = traj.accelerations();
        let e: f64 = vel
            .iter()
            .zip(&acc)
            .map(|(v, a)| propulsion_energy(v, a, &cfg.rotor, dt))
            .sum();
        denominator.push(Term::constant(cfg.alpha_w * e));
    }
    let fixed: f64 = (0..k_users).map(|k| cfg.t_k[k] * cfg.p_k[k]).sum();
    denominator.push(Term::constant(fixed));
    denominator.push(Term::affine(
        (l_l..l_l + k_users).collect(),
        (0..k_users)
            .map(|k| cfg.phi_u * cfg.chi_k[k] * cfg.f_l_k[k] * cfg.f_l_k[k])
            .collect(),
        0.0,
    ));
    denominator.push(Term::affine(
        (u..u + k_users).collect(),
        (0..k_users).map(|k| cfg.phi_s * cfg.chi_k[k]).collect(),
        0.0,
    ));

    let mut fractional = FractionalProgram {
        base: p,
        numerator,
        denominator,
    };
    let start = if fractional.base.is_strictly_feasible(&x0) {
        x0
    } else {
        find_strictly_feasible(&fractional.base, &x0).map_err(|_| {
            SubproblemError::InfeasibleExpansion(fractional.base.first_violation(&x0).unwrap_or_default())
        })?
    };
    fractional.base.objective_scale = fractional.numerator_value(&start).abs().max(1.0);
    Ok(InnerProgram {
        fractional,
        layout,
        start,
        taylor,
    })
}
