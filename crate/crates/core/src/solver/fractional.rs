//! Ratio objectives `N(x) / D(x)` over a shared convex feasible set.

use super::program::{terms_value, ConvexProgram, Term};

/// Concave numerator over a convex, positive denominator. `base` carries
/// the variables, bounds and constraints; its own objective is ignored.
#[derive(Debug, Clone)]
pub struct FractionalProgram {
    pub base: ConvexProgram,
    pub numerator: Vec<Term>,
    pub denominator: Vec<Term>,
}

impl FractionalProgram {
    pub fn numerator_value(&self, x: &[f64]) -> f64 {
        terms_value(&self.numerator, x)
    }

    pub fn denominator_value(&self, x: &[f64]) -> f64 {
        terms_value(&self.denominator, x)
    }

    pub fn ratio(&self, x: &[f64]) -> f64 {
        self.numerator_value(x) / self.denominator_value(x)
    }

    /// `max N(x) - λ D(x)` over the same feasible set.
    pub fn parametric(&self, lambda: f64) -> ConvexProgram {
        let mut p = self.base.clone();
        p.objective = self.numerator.clone();
        p.objective
            .extend(self.denominator.iter().cloned().map(|t| t.scaled(-lambda)));
        p
    }
}
