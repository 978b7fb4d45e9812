//! Constrained discrete-time linear-quadratic optimal control.
//!
//! The crate computes constrained optimal steady states with KKT
//! certificates, synthesizes quadratic storage functions certifying strict
//! (pre-)dissipativity, solves finite-horizon problems and checks the
//! measure-turnpike property empirically.

mod anderson;
pub mod cli;
pub mod dissipativity;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ocp;
pub mod scenarios;
pub mod steady_state;
pub mod system_analysis;
pub mod turnpike;

pub use error::{Error, Result};
pub use model::{ConstraintSet, Piece, Problem, Trajectory};
