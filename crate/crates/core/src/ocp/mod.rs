//! Finite-horizon constrained LQ problems.

mod admm;
mod condense;
mod gap;
mod lq;
mod oracle;
mod polish;

pub use admm::{solve_ocp, solve_ocp_with, OcpOptions, OcpSolution, SolveStats};
pub use condense::{condense, CondensedQp};
pub use oracle::brute_oracle;
