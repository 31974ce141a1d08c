//! Smooth convex programs assembled from small local functions.
//!
//! A program maximizes a concave objective (a sum of [`Term`]s) subject to
//! convex constraints `Σ terms ≤ 0` and per-variable box bounds. Every term
//! reads a handful of variables, so gradients are sparse and Hessians are
//! accumulated block by block.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

/// A twice-differentiable function of a small local argument vector.
///
/// `eval` returns the value and, when requested, overwrites `grad`
/// (length `arity`) and `hess` (row-major `arity × arity`).
pub trait SmoothFn: Send + Sync + fmt::Debug {
    fn arity(&self) -> usize;
    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64;
}

/// `weight · func(x[vars])`.
#[derive(Clone, Debug)]
pub struct Term {
    pub vars: Vec<usize>,
    pub weight: f64,
    pub func: Arc<dyn SmoothFn>,
}

impl Term {
    pub fn new(vars: Vec<usize>, weight: f64, func: Arc<dyn SmoothFn>) -> Self {
        debug_assert_eq!(vars.len(), func.arity());
        Term { vars, weight, func }
    }

    /// `Σ coeffs[i] x[vars[i]] + constant`.
    pub fn affine(vars: Vec<usize>, coeffs: Vec<f64>, constant: f64) -> Self {
        let func = Arc::new(Affine { coeffs, constant });
        Term::new(vars, 1.0, func)
    }

    pub fn constant(value: f64) -> Self {
        Term::affine(Vec::new(), Vec::new(), value)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.weight *= factor;
        self
    }
}

/// `Σ c_i z_i + constant`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl SmoothFn for Affine {
    fn arity(&self) -> usize {
        self.coeffs.len()
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        if let Some(g) = grad {
            g.copy_from_slice(&self.coeffs);
        }
        if let Some(h) = hess {
            h.fill(0.0);
        }
        self.constant + self.coeffs.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// `‖z - center‖² + offset`.
#[derive(Debug, Clone)]
pub struct SquaredNorm {
    pub center: Vec<f64>,
    pub offset: f64,
}

impl SmoothFn for SquaredNorm {
    fn arity(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let n = self.center.len();
        if let Some(g) = grad {
            for i in 0..n {
                g[i] = 2.0 * (z[i] - self.center[i]);
            }
        }
        if let Some(h) = hess {
            h.fill(0.0);
            for i in 0..n {
                h[i * n + i] = 2.0;
            }
        }
        self.offset
            + z.iter()
                .zip(&self.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
    }
}

/// `x² / y` over `(x, y)` with `y > 0`.
#[derive(Debug, Clone, Copy)]
pub struct QuadOverLin;

impl SmoothFn for QuadOverLin {
    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let (x, y) = (z[0], z[1]);
        if let Some(g) = grad {
            g[0] = 2.0 * x / y;
            g[1] = -x * x / (y * y);
        }
        if let Some(h) = hess {
            h[0] = 2.0 / y;
            h[1] = -2.0 * x / (y * y);
            h[2] = h[1];
            h[3] = 2.0 * x * x / (y * y * y);
        }
        x * x / y
    }
}

/// `inner(M z + shift)` for a dense `rows × cols` matrix `M` (row-major).
#[derive(Debug, Clone)]
pub struct Mapped {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<f64>,
    pub shift: Vec<f64>,
    pub inner: Arc<dyn SmoothFn>,
}

impl Mapped {
    pub fn new(rows: usize, cols: usize, matrix: Vec<f64>, shift: Vec<f64>, inner: Arc<dyn SmoothFn>) -> Self {
        assert_eq!(matrix.len(), rows * cols);
        assert_eq!(shift.len(), rows);
        assert_eq!(inner.arity(), rows);
        Mapped {
            rows,
            cols,
            matrix,
            shift,
            inner,
        }
    }
}

impl SmoothFn for Mapped {
    fn arity(&self) -> usize {
        self.cols
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let (r, c) = (self.rows, self.cols);
        let w: Vec<f64> = (0..r)
            .map(|i| self.shift[i] + (0..c).map(|j| self.matrix[i * c + j] * z[j]).sum::<f64>())
            .collect();
        let want_grad = grad.is_some();
        let want_hess = hess.is_some();
        let mut gw = vec![0.0; if want_grad { r } else { 0 }];
        let mut hw = vec![0.0; if want_hess { r * r } else { 0 }];
        let value = self.inner.eval(
            &w,
            if want_grad { Some(&mut gw) } else { None },
            if want_hess { Some(&mut hw) } else { None },
        );
        if let Some(g) = grad {
            for j in 0..c {
                g[j] = (0..r).map(|i| self.matrix[i * c + j] * gw[i]).sum();
            }
        }
        if let Some(h) = hess {
            // Mᵀ Hw M
            let mut hm = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    hm[i * c + j] = (0..r).map(|k| hw[i * r + k] * self.matrix[k * c + j]).sum();
                }
            }
            for a in 0..c {
                for b in 0..c {
                    h[a * c + b] = (0..r).map(|i| self.matrix[i * c + a] * hm[i * c + b]).sum();
                }
            }
        }
        value
    }
}

type ClosureEval = dyn Fn(&[f64], Option<&mut [f64]>, Option<&mut [f64]>) -> f64 + Send + Sync;

/// A [`SmoothFn`] backed by a closure.
pub struct FnTerm {
    arity: usize,
    f: Box<ClosureEval>,
}

impl FnTerm {
    pub fn new(
        arity: usize,
        f: impl Fn(&[f64], Option<&mut [f64]>, Option<&mut [f64]>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnTerm {
            arity,
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnTerm(arity={})", self.arity)
    }
}

impl SmoothFn for FnTerm {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        (self.f)(z, grad, hess)
    }
}

/// A named contiguous range of variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// `Σ terms ≤ 0`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<Term>,
}

/// Sparse gradient: `(variable, partial)` pairs, duplicates allowed.
pub type SparseGrad = Vec<(usize, f64)>;

/// Concave maximization with convex inequality constraints and box bounds.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    pub blocks: Vec<Block>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Typical magnitude of each variable, used to normalize residuals.
    pub scales: Vec<f64>,
    pub objective: Vec<Term>,
    pub constraints: Vec<Constraint>,
    /// Typical objective magnitude, used for relative tolerances.
    pub objective_scale: f64,
}

impl Default for ConvexProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvexProgram {
    pub fn new() -> Self {
        ConvexProgram {
            blocks: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            scales: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
            objective_scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Appends `len` variables with common bounds and scale; returns the
    /// index of the first one.
    pub fn add_block(&mut self, name: &str, len: usize, lower: f64, upper: f64, scale: f64) -> usize {
        let start = self.dim();
        self.blocks.push(Block {
            name: name.to_string(),
            start,
            len,
        });
        self.lower.extend(std::iter::repeat_n(lower, len));
        self.upper.extend(std::iter::repeat_n(upper, len));
        self.scales.extend(std::iter::repeat_n(scale, len));
        start
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn add_objective(&mut self, term: Term) {
        self.objective.push(term);
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<Term>) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
        });
    }

    /// Number of finite bounds.
    pub fn num_finite_bounds(&self) -> usize {
        self.lower.iter().filter(|l| l.is_finite()).count()
            + self.upper.iter().filter(|u| u.is_finite()).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        terms_value(&self.objective, x)
    }

    pub fn constraint_value(&self, i: usize, x: &[f64]) -> f64 {
        terms_value(&self.constraints[i].terms, x)
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        (0..self.constraints.len())
            .map(|i| self.constraint_value(i, x))
            .collect()
    }

    /// Dense objective gradient.
    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut sparse = SparseGrad::new();
        terms_eval(&self.objective, x, Some(&mut sparse), None);
        densify(&sparse, self.dim())
    }

    /// Value, sparse gradient and (optionally) Hessian of constraint `i`,
    /// the latter added into `hess` scaled by `hess_scale`.
    pub fn constraint_eval(
        &self,
        i: usize,
        x: &[f64],
        grad: &mut SparseGrad,
        hess: Option<(&mut DMatrix<f64>, f64)>,
    ) -> f64 {
        grad.clear();
        terms_eval(&self.constraints[i].terms, x, Some(grad), hess)
    }

    /// Value and gradient of the objective, Hessian added into `hess`
    /// scaled by `hess_scale`.
    pub fn objective_eval(
        &self,
        x: &[f64],
        grad: &mut SparseGrad,
        hess: Option<(&mut DMatrix<f64>, f64)>,
    ) -> f64 {
        grad.clear();
        terms_eval(&self.objective, x, Some(grad), hess)
    }

    /// True when every bound and constraint holds strictly.
    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.first_violation(x).is_none()
    }

    /// Name of the first bound or constraint that does not hold strictly.
    pub fn first_violation(&self, x: &[f64]) -> Option<String> {
        for (j, v) in x.iter().enumerate() {
            if !v.is_finite() || *v <= self.lower[j] || *v >= self.upper[j] {
                return Some(format!("bound on {}", self.variable_name(j)));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let g = self.constraint_value(i, x);
            if !(g < 0.0) {
                return Some(c.name.clone());
            }
        }
        None
    }

    /// `block[offset]` label of variable `j`.
    pub fn variable_name(&self, j: usize) -> String {
        self.blocks
            .iter()
            .find(|b| j >= b.start && j < b.start + b.len)
            .map(|b| format!("{}[{}]", b.name, j - b.start))
            .unwrap_or_else(|| format!("x[{j}]"))
    }

    /// Largest relative mismatch between analytic gradients (objective and
    /// constraints) and central finite differences at `x`.
    pub fn gradient_check(&self, x: &[f64], rel_step: f64) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        let mut check = |value: &dyn Fn(&[f64]) -> f64, analytic: Vec<f64>| {
            let mut xp = x.to_vec();
            for j in 0..n {
                let h = rel_step * x[j].abs().max(self.scales[j]);
                let orig = xp[j];
                xp[j] = orig + h;
                let fp = value(&xp);
                xp[j] = orig - h;
                let fm = value(&xp);
                xp[j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let scale = analytic[j].abs().max(fd.abs());
                let noise = 1e-9 * value(x).abs().max(1e-300) / h;
                if scale > noise {
                    worst = worst.max((fd - analytic[j]).abs() / scale);
                }
            }
        };
        check(&|z| self.objective_value(z), self.objective_gradient(x));
        for i in 0..self.constraints.len() {
            let mut g = SparseGrad::new();
            self.constraint_eval(i, x, &mut g, None);
            check(&|z| self.constraint_value(i, z), densify(&g, n));
        }
        worst
    }
}

pub(crate) fn densify(sparse: &SparseGrad, n: usize) -> Vec<f64> {
    let mut dense = vec![0.0; n];
    for &(j, v) in sparse {
        dense[j] += v;
    }
    dense
}

fn gather(term: &Term, x: &[f64]) -> Vec<f64> {
    term.vars.iter().map(|&j| x[j]).collect()
}

pub(crate) fn terms_value(terms: &[Term], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| t.weight * t.func.eval(&gather(t, x), None, None))
        .sum()
}

pub(crate) fn terms_eval(
    terms: &[Term],
    x: &[f64],
    mut grad: Option<&mut SparseGrad>,
    mut hess: Option<(&mut DMatrix<f64>, f64)>,
) -> f64 {
    let mut value = 0.0;
    for t in terms {
        let a = t.vars.len();
        let z = gather(t, x);
        let mut g = vec![0.0; a];
        let mut h = vec![0.0; if hess.is_some() { a * a } else { 0 }];
        let v = t.func.eval(
            &z,
            Some(&mut g),
            if hess.is_some() { Some(&mut h) } else { None },
        );
        value += t.weight * v;
        if let Some(gs) = grad.as_deref_mut() {
            for (i, &j) in t.vars.iter().enumerate() {
                if g[i] != 0.0 {
                    gs.push((j, t.weight * g[i]));
                }
            }
        }
        if let Some((hm, s)) = hess.as_mut() {
            let w = t.weight * *s;
            for (p, &jp) in t.vars.iter().enumerate() {
                for (q, &jq) in t.vars.iter().enumerate() {
                    let v = h[p * a + q];
                    if v != 0.0 {
                        hm[(jp, jq)] += w * v;
                    }
                }
            }
        }
    }
    value
}
