//! Energy-efficient edge computing assisted by a UAV-mounted reflecting
//! surface: models, convex subproblems, an interior point solver and the
//! alternating optimizer.

pub mod channel;
pub mod cli;
pub mod energy;
pub mod optimizer;
pub mod scenario;
pub mod solver;
pub mod subproblems;
pub mod trajectory;
