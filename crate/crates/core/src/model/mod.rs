//! Problem data, constraint sets and trajectories.

pub mod constraint;
pub mod problem;
pub mod trajectory;

pub use constraint::{dykstra, Block, ConstraintSet, Piece, Subgradient};
pub(crate) use constraint::vertex_directions;
pub use problem::{factor_cost, Problem};
pub use trajectory::{is_admissible, is_admissible_with, Admissibility, Trajectory, Violation, ADMISSIBILITY_TOL};
