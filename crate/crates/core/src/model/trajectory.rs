use nalgebra::DVector;
use serde::Serialize;

use super::problem::Problem;
use crate::error::{check_dim, Result};

/// Membership tolerance used by [`is_admissible`].
pub const ADMISSIBILITY_TOL: f64 = 1e-8;

/// State/control sequence of horizon `N` with per-stage costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

impl Trajectory {
    /// Roll the dynamics forward from `x0` under `controls`.
    pub fn rollout(problem: &Problem, x0: &DVector<f64>, controls: Vec<DVector<f64>>) -> Result<Self> {
        check_dim("initial state", problem.n(), x0.len())?;
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in &controls {
            check_dim("control", problem.m(), u.len())?;
            let next = problem.step_unchecked(states.last().unwrap(), u);
            states.push(next);
        }
        Ok(Self::from_parts(problem, states, controls))
    }

    pub(crate) fn from_parts(problem: &Problem, states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Self {
        let stage_costs: Vec<f64> = states
            .iter()
            .zip(&controls)
            .map(|(x, u)| problem.stage_cost_unchecked(x, u))
            .collect();
        let total_cost = stage_costs.iter().sum();
        Self {
            states,
            controls,
            stage_costs,
            total_cost,
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Largest relative dynamics defect `‖x(i+1) − Ax(i) − Bu(i)‖ / (1 + ‖x(i)‖)`.
    pub fn dynamics_defect(&self, problem: &Problem) -> f64 {
        (0..self.horizon())
            .map(|i| {
                let pred = problem.step_unchecked(&self.states[i], &self.controls[i]);
                (&self.states[i + 1] - pred).norm() / (1.0 + self.states[i].norm())
            })
            .fold(0.0, f64::max)
    }

    /// Squared stacked deviation `‖x(i) − x_e‖² + ‖u(i) − u_e‖²` for `i < N`.
    pub fn deviations(&self, xe: &DVector<f64>, ue: &DVector<f64>) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.controls)
            .map(|(x, u)| (x - xe).norm_squared() + (u - ue).norm_squared())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    /// Stage index; equals `N` for the terminal state.
    pub stage: usize,
    pub terminal: bool,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub first_violation: Option<Violation>,
}

/// `(x(i), u(i)) ∈ S` for `i < N` and `x(N) ∈ X`, to `tol`.
pub fn is_admissible_with(problem: &Problem, traj: &Trajectory, tol: f64) -> Admissibility {
    let set = problem.set();
    for i in 0..traj.horizon() {
        let g = set.evaluate_g(&traj.states[i], &traj.controls[i]);
        if g > tol {
            return Admissibility {
                admissible: false,
                first_violation: Some(Violation {
                    stage: i,
                    terminal: false,
                    g,
                }),
            };
        }
    }
    let n = traj.horizon();
    let last = &traj.states[n];
    if !set.contains_state(last, tol) {
        let g = set.state_g(last).unwrap_or(f64::NAN);
        return Admissibility {
            admissible: false,
            first_violation: Some(Violation {
                stage: n,
                terminal: true,
                g,
            }),
        };
    }
    Admissibility {
        admissible: true,
        first_violation: None,
    }
}

pub fn is_admissible(problem: &Problem, traj: &Trajectory) -> Admissibility {
    is_admissible_with(problem, traj, ADMISSIBILITY_TOL)
}
