//! KKT residuals with least-squares multipliers.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::program::{densify, ConvexProgram, SparseGrad};

/// Relative optimality measures of a candidate point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    /// Largest constraint or bound violation, in scaled distance units.
    pub primal: f64,
    /// Scaled Lagrangian gradient norm relative to the objective gradient.
    pub stationarity: f64,
    /// Norm of `μ_i g_i` relative to the objective magnitude.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.complementarity)
    }
}

pub(crate) fn scaled_norm(v: &[f64], scales: &[f64]) -> f64 {
    v.iter()
        .zip(scales)
        .map(|(a, s)| (a * s) * (a * s))
        .sum::<f64>()
        .sqrt()
}

/// Residuals at `x` with nonnegative multipliers chosen to minimize the
/// combined stationarity and complementarity residual.
pub fn kkt_residuals(program: &ConvexProgram, x: &[f64]) -> KktResiduals {
    let n = program.dim();
    let s = &program.scales;
    let grad_f = program.objective_gradient(x);
    let f = program.objective_value(x);
    let sigma_s = scaled_norm(&grad_f, s).max(program.objective_scale).max(1e-300);
    let sigma_c = f.abs().max(program.objective_scale).max(1e-300);

    // Each candidate: scaled gradient column and constraint value.
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let mut primal: f64 = 0.0;
    let mut sg = SparseGrad::new();
    for i in 0..program.constraints.len() {
        let g = program.constraint_eval(i, x, &mut sg, None);
        let dense = densify(&sg, n);
        let norm = scaled_norm(&dense, s);
        if g > 0.0 {
            primal = primal.max(if norm > 0.0 { g / norm } else { f64::INFINITY });
        }
        cols.push(dense.iter().zip(s).map(|(d, sj)| d * sj / sigma_s).collect());
        vals.push(g);
    }
    for j in 0..n {
        for (bound, sign) in [(program.lower[j], -1.0), (program.upper[j], 1.0)] {
            if !bound.is_finite() {
                continue;
            }
            let g = sign * (x[j] - bound);
            if g > 0.0 {
                primal = primal.max(g / s[j]);
            }
            let mut col = vec![0.0; n];
            col[j] = sign * s[j] / sigma_s;
            cols.push(col);
            vals.push(g);
        }
    }

    let m = cols.len();
    let target: Vec<f64> = grad_f.iter().zip(s).map(|(g, sj)| g * sj / sigma_s).collect();
    let mu = if m == 0 {
        Vec::new()
    } else {
        let q = DMatrix::from_fn(m, m, |a, b| {
            let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum();
            if a == b {
                dot + (vals[a] / sigma_c).powi(2)
            } else {
                dot
            }
        });
        let c = DVector::from_fn(m, |a, _| cols[a].iter().zip(&target).map(|(u, v)| u * v).sum());
        nnls_normal(&q, &c)
    };

    let mut resid = target.clone();
    for (a, col) in cols.iter().enumerate() {
        for j in 0..n {
            resid[j] -= mu[a] * col[j];
        }
    }
    let stationarity = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
    let complementarity = mu
        .iter()
        .zip(&vals)
        .map(|(u, g)| (u * g / sigma_c).powi(2))
        .sum::<f64>()
        .sqrt();
    KktResiduals {
        primal,
        stationarity,
        complementarity,
    }
}

/// Lawson–Hanson active set for `min ½ μᵀQμ − cᵀμ, μ ≥ 0` with `Q` PSD.
fn nnls_normal(q: &DMatrix<f64>, c: &DVector<f64>) -> Vec<f64> {
    let m = c.len();
    let ridge = 1e-14 * (0..m).map(|i| q[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-14 * c.amax().max(1e-300);
    let mut mu = vec![0.0; m];
    let mut passive = vec![false; m];

    let solve_passive = |passive: &[bool]| -> Vec<f64> {
        let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |a, b| q[(idx[a], idx[b])] + if a == b { ridge } else { 0.0 });
        let rhs = DVector::from_fn(k, |a, _| c[idx[a]]);
        let sol = match sub.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => sub.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k)),
        };
        let mut z = vec![0.0; m];
        for (a, &i) in idx.iter().enumerate() {
            z[i] = sol[a];
        }
        z
    };

    for _ in 0..3 * m + 10 {
        let w: Vec<f64> = (0..m)
            .map(|i| c[i] - (0..m).map(|j| q[(i, j)] * mu[j]).sum::<f64>())
            .collect();
        let next = (0..m)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = next else { break };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..m).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                mu = z;
                break;
            }
            let mut alpha = 1.0f64;
            for i in 0..m {
                if passive[i] && z[i] <= 0.0 {
                    alpha = alpha.min(mu[i] / (mu[i] - z[i]));
                }
            }
            for i in 0..m {
                mu[i] += alpha * (z[i] - mu[i]);
                if passive[i] && mu[i] <= 1e-300 {
                    passive[i] = false;
                    mu[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::program::{SquaredNorm, Term};
    use std::sync::Arc;

    fn qp() -> ConvexProgram {
        // max -(x-2)² - (y-2)² s.t. x + y ≤ 2, x,y ∈ [0, 5]; optimum (1,1).
        let mut p = ConvexProgram::new();
        p.add_block("xy", 2, 0.0, 5.0, 1.0);
        p.add_objective(Term::new(
            vec![0, 1],
            -1.0,
            Arc::new(SquaredNorm {
                center: vec![2.0, 2.0],
                offset: 0.0,
            }),
        ));
        p.add_constraint("sum", vec![Term::affine(vec![0, 1], vec![1.0, 1.0], -2.0)]);
        p
    }

    #[test]
    fn analytic_optimum_has_zero_residuals() {
        let r = kkt_residuals(&qp(), &[1.0, 1.0]);
        assert!(r.max() <= 1e-8, "{r:?}");
    }

    #[test]
    fn interior_non_optimal_point_is_not_stationary() {
        let r = kkt_residuals(&qp(), &[0.5, 0.5]);
        assert!(r.stationarity > 1e-3 || r.complementarity > 1e-3, "{r:?}");
        assert_eq!(r.primal, 0.0);
    }

    #[test]
    fn violation_is_reported() {
        let r = kkt_residuals(&qp(), &[2.0, 2.0]);
        assert!((r.primal - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nnls_small() {
        // min ½‖μ - (1, -1)‖² → μ = (1, 0).
        let q = DMatrix::identity(2, 2);
        let c = DVector::from_vec(vec![1.0, -1.0]);
        let mu = nnls_normal(&q, &c);
        assert!((mu[0] - 1.0).abs() < 1e-12 && mu[1] == 0.0);
    }
}
