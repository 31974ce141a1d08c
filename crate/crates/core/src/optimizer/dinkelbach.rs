//! Dinkelbach iteration for concave-over-convex ratios.

use crate::solver::{solve, FractionalProgram, SolveStatus};

use super::OptimizeError;

/// Parametric updates allowed before giving up.
pub const MAX_LAMBDA_UPDATES: usize = 50;

#[derive(Debug, Clone)]
pub struct DinkelbachResult {
    pub x: Vec<f64>,
    /// `λ₀, λ₁, …`; each entry is the ratio at the previous solution.
    pub lambda_trace: Vec<f64>,
    /// `N / D` at `x`.
    pub lambda: f64,
    /// `max N - λ D` at the last parametric solve; at most `tol·min(1, λ)·D`
    /// on convergence.
    pub f_value: f64,
    pub denominator: f64,
    pub converged: bool,
    pub last_status: SolveStatus,
}

/// Maximizes `N(x) / D(x)` from a strictly feasible `start`. `lambda0` must
/// not exceed the optimal ratio; the ratio at `start` is always safe.
///
/// Returns [`OptimizeError::DinkelbachNoConvergence`] after
/// [`MAX_LAMBDA_UPDATES`] updates; [`dinkelbach_partial`] returns the last
/// iterate instead.
pub fn dinkelbach(
    program: &FractionalProgram,
    start: &[f64],
    lambda0: f64,
    tol: f64,
) -> Result<DinkelbachResult, OptimizeError> {
    let r = dinkelbach_partial(program, start, lambda0, tol)?;
    if r.converged {
        Ok(r)
    } else {
        Err(OptimizeError::DinkelbachNoConvergence {
            updates: r.lambda_trace.len() - 1,
        })
    }
}

pub fn dinkelbach_partial(
    program: &FractionalProgram,
    start: &[f64],
    lambda0: f64,
    tol: f64,
) -> Result<DinkelbachResult, OptimizeError> {
    if !(lambda0 >= 0.0) {
        return Err(OptimizeError::Invalid(format!("lambda0 must be nonnegative, got {lambda0}")));
    }
    let mut x = start.to_vec();
    let mut lambda = lambda0;
    let mut trace = vec![lambda0];
    let mut last_status;
    let mut f_value = f64::INFINITY;
    let mut converged = false;
    let inner_tol = (0.1 * tol).clamp(1e-10, 1e-6);

    loop {
        let parametric = program.parametric(lambda);
        // The previous optimum sits on the boundary; pull it toward the
        // (interior) start before re-centering.
        let warm: Vec<f64> = x.iter().zip(start).map(|(a, b)| 0.9 * a + 0.1 * b).collect();
        let sol = solve(&parametric, &warm, inner_tol)?;
        last_status = sol.status;
        let num = program.numerator_value(&sol.x);
        let den = program.denominator_value(&sol.x);
        let ratio = num / den;
        if !(ratio.is_finite() && den > 0.0) {
            return Err(OptimizeError::Invalid("ratio denominator is not positive".into()));
        }
        if ratio < lambda {
            // F(λ) ≤ 0 up to solver accuracy: the previous point is optimal.
            f_value = f_value.min(num - lambda * den).max(0.0);
            converged = true;
            break;
        }
        x = sol.x;
        f_value = num - lambda * den;
        if f_value <= tol * lambda.min(1.0) * den {
            converged = true;
            break;
        }
        if trace.len() > MAX_LAMBDA_UPDATES {
            break;
        }
        lambda = ratio;
        trace.push(lambda);
    }

    let denominator = program.denominator_value(&x);
    Ok(DinkelbachResult {
        lambda: program.numerator_value(&x) / denominator,
        x,
        lambda_trace: trace,
        f_value,
        denominator,
        converged,
        last_status,
    })
}
