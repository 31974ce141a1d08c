//! Log-barrier interior point method with damped Newton centering.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use super::kkt::{kkt_residuals, scaled_norm, KktResiduals};
use super::program::{densify, ConvexProgram, SparseGrad, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("start point has {found} entries, program has {expected} variables")]
    Dimension { expected: usize, found: usize },
    #[error("start point is not strictly feasible: {0}")]
    InfeasibleStart(String),
    #[error("no strictly feasible point exists (phase-I value {0:e})")]
    Infeasible(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative tolerance on the duality gap.
    pub tol: f64,
    pub barrier_factor: f64,
    /// Newton iterations allowed per barrier stage.
    pub max_newton: usize,
    pub max_stages: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            barrier_factor: 10.0,
            max_newton: 500,
            max_stages: 40,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    /// Total Newton iterations.
    pub iterations: usize,
    pub stages: usize,
    pub status: SolveStatus,
    /// Objective at the end of every barrier stage.
    pub trace: Vec<f64>,
    /// Constraint multipliers implied by the final barrier parameter.
    pub multipliers: Vec<f64>,
}

/// Solves `program` from a strictly feasible `start`.
pub fn solve(program: &ConvexProgram, start: &[f64], tol: f64) -> Result<Solution, SolveError> {
    solve_with(program, start, &SolveOptions::with_tol(tol))
}

pub fn solve_with(
    program: &ConvexProgram,
    start: &[f64],
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    if start.len() != program.dim() {
        return Err(SolveError::Dimension {
            expected: program.dim(),
            found: start.len(),
        });
    }
    if let Some(name) = program.first_violation(start) {
        return Err(SolveError::InfeasibleStart(name));
    }
    Ok(run(program, start, opts, None))
}

/// Moves `start` strictly inside the box, then, if some constraint is not
/// strictly satisfied, runs a phase-I program to find a strictly feasible
/// point.
pub fn find_strictly_feasible(program: &ConvexProgram, start: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = program.dim();
    if start.len() != n {
        return Err(SolveError::Dimension {
            expected: n,
            found: start.len(),
        });
    }
    let x0 = interiorize(program, start);
    if program.is_strictly_feasible(&x0) {
        return Ok(x0);
    }

    let mut phase1 = ConvexProgram::new();
    phase1.blocks = program.blocks.clone();
    phase1.lower = program.lower.clone();
    phase1.upper = program.upper.clone();
    phase1.scales = program.scales.clone();
    let s = phase1.add_block("phase1_s", 1, -1.0, f64::INFINITY, 1.0);
    phase1.add_objective(Term::affine(vec![s], vec![-1.0], 0.0));

    let mut worst: f64 = 0.0;
    let mut grad = SparseGrad::new();
    for i in 0..program.constraints.len() {
        let g = program.constraint_eval(i, &x0, &mut grad, None);
        let gnorm = scaled_norm(&densify(&grad, n), &program.scales);
        let norm = if g.is_finite() && g.abs() > 0.0 {
            g.abs()
        } else {
            gnorm.max(1e-300)
        };
        let mut terms: Vec<Term> = program.constraints[i]
            .terms
            .iter()
            .cloned()
            .map(|t| t.scaled(1.0 / norm))
            .collect();
        terms.push(Term::affine(vec![s], vec![-1.0], 0.0));
        phase1.add_constraint(program.constraints[i].name.clone(), terms);
        let ratio = g / norm;
        worst = worst.max(if ratio.is_finite() { ratio } else { 1e6 });
    }

    let mut z0 = x0.clone();
    z0.push(worst + 1.0);
    if !phase1.is_strictly_feasible(&z0) {
        let name = phase1.first_violation(&z0).unwrap_or_default();
        return Err(SolveError::InfeasibleStart(name));
    }
    let stop = |z: &[f64]| z[s] < 0.0 && program.is_strictly_feasible(&z[..n]);
    let sol = run(&phase1, &z0, &SolveOptions::with_tol(1e-8), Some(&stop));
    if stop(&sol.x) {
        let mut x = sol.x;
        x.truncate(n);
        Ok(x)
    } else {
        Err(SolveError::Infeasible(sol.x[s]))
    }
}

fn interiorize(program: &ConvexProgram, start: &[f64]) -> Vec<f64> {
    start
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let (l, u, s) = (program.lower[j], program.upper[j], program.scales[j]);
            let x = if x.is_finite() { x } else { 0.0 };
            match (l.is_finite(), u.is_finite()) {
                (true, true) => {
                    let m = 1e-3 * (u - l);
                    if x <= l || x >= u {
                        x.clamp(l + m, u - m)
                    } else {
                        x
                    }
                }
                (true, false) if x <= l => l + 1e-3 * s.max(l.abs()),
                (false, true) if x >= u => u - 1e-3 * s.max(u.abs()),
                _ => x,
            }
        })
        .collect()
}

/// Barrier value `-t f - Σ ln(-g) - Σ ln(bound slack)`, `None` outside the
/// strict interior.
fn barrier_value(p: &ConvexProgram, x: &[f64], t: f64) -> Option<f64> {
    let mut v = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        if !xj.is_finite() {
            return None;
        }
        if p.lower[j].is_finite() {
            let d = xj - p.lower[j];
            if !(d > 0.0) {
                return None;
            }
            v -= d.ln();
        }
        if p.upper[j].is_finite() {
            let d = p.upper[j] - xj;
            if !(d > 0.0) {
                return None;
            }
            v -= d.ln();
        }
    }
    for i in 0..p.constraints.len() {
        let g = p.constraint_value(i, x);
        if !(g < 0.0) {
            return None;
        }
        v -= (-g).ln();
    }
    let f = p.objective_value(x);
    if !f.is_finite() {
        return None;
    }
    let total = v - t * f;
    total.is_finite().then_some(total)
}

fn merge(grad: &mut SparseGrad) {
    grad.sort_by_key(|e| e.0);
    let mut out: SparseGrad = Vec::with_capacity(grad.len());
    for &(j, v) in grad.iter() {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    *grad = out;
}

struct Derivs {
    f: f64,
    grad_f: Vec<f64>,
    /// Gradient of the barrier part only.
    grad_b: Vec<f64>,
    hess: DMatrix<f64>,
    g: Vec<f64>,
}

fn derivs(p: &ConvexProgram, x: &[f64], t: f64, want_hess: bool) -> Derivs {
    let n = p.dim();
    let mut hess = DMatrix::zeros(if want_hess { n } else { 0 }, if want_hess { n } else { 0 });
    let mut sg = SparseGrad::new();
    let f = p.objective_eval(x, &mut sg, want_hess.then_some((&mut hess, -t)));
    let grad_f = densify(&sg, n);
    let mut grad_b = vec![0.0; n];
    for j in 0..n {
        if p.lower[j].is_finite() {
            let d = x[j] - p.lower[j];
            grad_b[j] -= 1.0 / d;
            if want_hess {
                hess[(j, j)] += 1.0 / (d * d);
            }
        }
        if p.upper[j].is_finite() {
            let d = p.upper[j] - x[j];
            grad_b[j] += 1.0 / d;
            if want_hess {
                hess[(j, j)] += 1.0 / (d * d);
            }
        }
    }
    let mut g = Vec::with_capacity(p.constraints.len());
    for i in 0..p.constraints.len() {
        let gi = p.constraint_value(i, x);
        let inv = 1.0 / (-gi);
        p.constraint_eval(i, x, &mut sg, want_hess.then_some((&mut hess, inv)));
        merge(&mut sg);
        for &(j, v) in &sg {
            grad_b[j] += v * inv;
        }
        if want_hess {
            let w = inv * inv;
            for &(a, va) in &sg {
                for &(b, vb) in &sg {
                    hess[(a, b)] += w * va * vb;
                }
            }
        }
        g.push(gi);
    }
    Derivs {
        f,
        grad_f,
        grad_b,
        hess,
        g,
    }
}

/// Newton direction for the barrier function with gradient `grad`.
fn newton_direction(hess: &DMatrix<f64>, grad: &[f64]) -> Vec<f64> {
    let n = grad.len();
    let d: Vec<f64> = (0..n)
        .map(|j| {
            let h = hess[(j, j)];
            if h > 0.0 && h.is_finite() {
                1.0 / h.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |a, b| d[a] * hess[(a, b)] * d[b]);
    let rhs = DVector::from_fn(n, |j, _| -d[j] * grad[j]);
    let mut delta = 0.0;
    for _ in 0..24 {
        let mut m = scaled.clone();
        for j in 0..n {
            m[(j, j)] += delta;
        }
        if let Some(chol) = m.cholesky() {
            let step = chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return (0..n).map(|j| d[j] * step[j]).collect();
            }
        }
        delta = if delta == 0.0 { 1e-10 } else { delta * 10.0 };
    }
    // Scaled steepest descent.
    (0..n).map(|j| d[j] * rhs[j]).collect()
}

fn stationarity(p: &ConvexProgram, grad_phi: &[f64], t: f64, grad_f: &[f64]) -> f64 {
    let scaled: Vec<f64> = grad_phi.iter().map(|v| v / t).collect();
    let sigma = scaled_norm(grad_f, &p.scales).max(p.objective_scale).max(1e-300);
    scaled_norm(&scaled, &p.scales) / sigma
}

type StopFn<'a> = Option<&'a dyn Fn(&[f64]) -> bool>;

fn run(p: &ConvexProgram, start: &[f64], opts: &SolveOptions, stop: StopFn) -> Solution {
    let n = p.dim();
    let m = p.constraints.len() + p.num_finite_bounds();
    let mut x = start.to_vec();
    let target = 0.5 * opts.tol;

    let d0 = derivs(p, &x, 0.0, false);
    let obj_scale = |f: f64| f.abs().max(p.objective_scale).max(1e-300);
    let mut t = if m == 0 {
        1.0
    } else {
        let sf: Vec<f64> = d0.grad_f.iter().zip(&p.scales).map(|(g, s)| g * s).collect();
        let sb: Vec<f64> = d0.grad_b.iter().zip(&p.scales).map(|(g, s)| g * s).collect();
        let ff: f64 = sf.iter().map(|v| v * v).sum();
        let fb: f64 = sf.iter().zip(&sb).map(|(a, b)| a * b).sum();
        let base = m as f64 / obj_scale(d0.f);
        let guess = fb / ff;
        let t0 = if guess.is_finite() && guess > 0.0 { guess } else { base };
        t0.clamp(1e-4 * base, base / opts.tol)
    };

    let mut iterations = 0;
    let mut stages = 0;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut residuals = KktResiduals::default();
    let mut multipliers = vec![0.0; p.constraints.len()];

    if n == 0 {
        let f = p.objective_value(&x);
        return Solution {
            x,
            objective: f,
            residuals,
            iterations: 0,
            stages: 0,
            status: SolveStatus::Optimal,
            trace: vec![f],
            multipliers,
        };
    }

    'outer: while stages < opts.max_stages {
        stages += 1;
        let mut converged = false;
        let mut last = None;
        let mut last_dec = f64::INFINITY;
        for _ in 0..opts.max_newton {
            let dv = derivs(p, &x, t, true);
            let grad: Vec<f64> = dv.grad_b.iter().zip(&dv.grad_f).map(|(b, f)| b - t * f).collect();
            let final_stage = m == 0 || (m as f64) / t <= target * obj_scale(dv.f);
            let stat = stationarity(p, &grad, t, &dv.grad_f);
            let dir = newton_direction(&dv.hess, &grad);
            let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            let decrement = -slope;
            last_dec = decrement.max(0.0);
            last = Some((dv, grad, stat));
            let threshold = if final_stage { 1e-16 } else { 1e-10 };
            if decrement <= threshold || !(slope < 0.0) {
                converged = true;
                break;
            }
            let phi = barrier_value(p, &x, t).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            let mut accepted = None;
            let mut trial = vec![0.0; n];
            while step > 1e-20 {
                for j in 0..n {
                    trial[j] = x[j] + step * dir[j];
                }
                if let Some(v) = barrier_value(p, &trial, t) {
                    if v <= phi + 0.25 * step * slope + 1e-12 * phi.abs() {
                        accepted = Some(v);
                        break;
                    }
                }
                step *= 0.5;
            }
            iterations += 1;
            let Some(value) = accepted else {
                converged = true;
                break;
            };
            if value >= phi {
                // No measurable progress left at this barrier weight.
                converged = true;
                break;
            }
            x.copy_from_slice(&trial);
            if let Some(stop) = stop {
                if stop(&x) {
                    status = SolveStatus::Optimal;
                    break 'outer;
                }
            }
        }
        let (dv, grad, stat) = match last {
            Some(v) => v,
            None => break,
        };
        let f = p.objective_value(&x);
        log::trace!("stage {stages}: t {t:e} f {f:e} decrement {last_dec:e} centered {converged} iterations {iterations}");
        trace.push(f);
        let inv_t = 1.0 / t;
        multipliers = dv.g.iter().map(|g| inv_t / (-g)).collect();
        let _ = grad;
        let comp = (m as f64).sqrt() * inv_t / obj_scale(f);
        residuals = KktResiduals {
            primal: 0.0,
            stationarity: stat,
            complementarity: comp,
        };
        if !converged {
            status = SolveStatus::MaxIter;
            break;
        }
        // Suboptimality bound of an approximately centered point.
        let mf = m as f64;
        let certificate = (mf + last_dec + (mf * last_dec).sqrt()) * inv_t;
        if m == 0 || certificate <= target * obj_scale(f) {
            status = SolveStatus::Optimal;
            break;
        }
        let gap_closed = mf * inv_t <= target * obj_scale(f);
        if gap_closed && stop.is_none() {
            // Barrier multipliers lose precision once constraint values
            // approach rounding level; refit them instead.
            let refit = kkt_residuals(p, &x);
            if refit.max() <= opts.tol {
                residuals = refit;
                status = SolveStatus::Optimal;
                break;
            }
        }
        if (m as f64) * inv_t <= 1e-3 * target * obj_scale(f) {
            status = SolveStatus::MaxIter;
            break;
        }
        t *= opts.barrier_factor;
    }

    let objective = p.objective_value(&x);
    Solution {
        x,
        objective,
        residuals,
        iterations,
        stages,
        status,
        trace,
        multipliers,
    }
}
