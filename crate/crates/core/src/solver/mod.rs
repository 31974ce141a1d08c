//! Interior point solver for smooth convex programs.

mod barrier;
mod fractional;
mod kkt;
mod program;

pub use barrier::{find_strictly_feasible, solve, solve_with, Solution, SolveError, SolveOptions, SolveStatus};
pub use fractional::FractionalProgram;
pub use kkt::{kkt_residuals, KktResiduals};
pub use program::{
    Affine, Block, Constraint, ConvexProgram, FnTerm, Mapped, QuadOverLin, SmoothFn, SparseGrad, SquaredNorm, Term,
};
