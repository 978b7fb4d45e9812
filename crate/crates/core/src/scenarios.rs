//! Built-in problem instances.
//!
//! * [`example_rotation_box`]: damped rotation with box constraints on state
//!   and control; the turnpike is the interior origin.
//! * [`example_cone`]: damped rotation plus an integrator inside the
//!   ice-cream cone; the constrained optimal steady state sits on the cone
//!   vertex while the unconstrained one lies outside the set.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};

use crate::model::{Block, ConstraintSet, Piece, Problem};
use crate::turnpike::InitialSet;

/// Per-step decay factor `e^{-0.1}` shared by both examples.
pub fn decay() -> f64 {
    (-0.1f64).exp()
}

fn damped_rotation() -> DMatrix<f64> {
    let (s, c) = FRAC_PI_4.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c]) * decay()
}

/// A problem together with its default initial set for turnpike scans.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub problem: Problem,
    pub initial_set: InitialSet,
}

pub fn example_rotation_box() -> Scenario {
    let set = ConstraintSet::new(
        2,
        2,
        vec![
            Piece::norm_box(Block::State, 2, 1.0),
            Piece::norm_box(Block::Control, 2, 0.1),
        ],
    )
    .expect("valid pieces");
    let problem = Problem::new(
        damped_rotation(),
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 2),
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        DVector::zeros(2),
        0.0,
        set,
    )
    .expect("consistent data");
    Scenario {
        name: "example1",
        problem,
        initial_set: InitialSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        },
    }
}

pub fn example_cone() -> Problem {
    let mut a = DMatrix::zeros(3, 3);
    a.view_mut((0, 0), (2, 2)).copy_from(&damped_rotation());
    a[(2, 2)] = 1.0;
    let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, -1.0]);
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 0.0, 1.0]));
    let set = ConstraintSet::new(
        3,
        1,
        vec![
            Piece::SecondOrderCone {
                axis: 2,
                radial: vec![0, 1],
            },
            Piece::Interval {
                coord: 3,
                lower: -1.0,
                upper: 1.0,
            },
        ],
    )
    .expect("valid pieces");
    Problem::new(
        a,
        b,
        q,
        DMatrix::identity(1, 1),
        DVector::from_column_slice(&[0.0, 0.0, 1.0]),
        DVector::from_column_slice(&[1.0]),
        0.0,
        set,
    )
    .expect("consistent data")
}

/// Cone example with its default bounded initial set `{x ∈ X : x₃ ≤ 5}`.
pub fn example_cone_scenario() -> Scenario {
    Scenario {
        name: "example2",
        problem: example_cone(),
        initial_set: InitialSet::ConeSlice { height: 5.0 },
    }
}

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "example1" => Some(example_rotation_box()),
        "example2" => Some(example_cone_scenario()),
        _ => None,
    }
}

/// Stabilizing feedback for the cone example: `u(x) = min{1, x₃ − e^{−0.1}‖(x₁, x₂)‖}`.
pub fn cone_feedback(x: &DVector<f64>) -> DVector<f64> {
    let radial = x[0].hypot(x[1]);
    DVector::from_element(1, (x[2] - decay() * radial).min(1.0))
}
