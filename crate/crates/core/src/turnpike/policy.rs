use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::model::{Problem, Trajectory, ADMISSIBILITY_TOL};
use crate::scenarios::cone_feedback;
use crate::Result;

/// State feedback `x ↦ u(x)`.
pub trait FeedbackPolicy: Sync {
    fn control(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl<F> FeedbackPolicy for F
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        self(x)
    }
}

/// Feedback laws selectable by name in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BuiltinPolicy {
    /// `u ≡ 0`.
    Zero { m: usize },
    /// `u ≡ u`, typically the steady control.
    Constant { u: Vec<f64> },
    /// `u = u_e − K(x − x_e)`.
    Linear {
        gain: Vec<Vec<f64>>,
        x_e: Vec<f64>,
        u_e: Vec<f64>,
    },
    /// Saturated cone law `u = min{1, x₃ − e^{−0.1}‖(x₁, x₂)‖}`.
    ConeFeedback,
}

impl FeedbackPolicy for BuiltinPolicy {
    fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            BuiltinPolicy::Zero { m } => DVector::zeros(*m),
            BuiltinPolicy::Constant { u } => DVector::from_column_slice(u),
            BuiltinPolicy::Linear { gain, x_e, u_e } => {
                DVector::from_fn(u_e.len(), |i, _| {
                    let row = &gain[i];
                    u_e[i] - row.iter().zip(x.iter().zip(x_e)).map(|(k, (a, b))| k * (a - b)).sum::<f64>()
                })
            }
            BuiltinPolicy::ConeFeedback => cone_feedback(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub trajectory: Trajectory,
    /// First stage whose pair leaves `S` (index `N` for a terminal state outside `X`).
    pub first_violation: Option<usize>,
}

/// Closed-loop roll-out of `policy` for `horizon` steps.
pub fn simulate_policy(
    p: &Problem,
    policy: &dyn FeedbackPolicy,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<PolicyRun> {
    let set = p.set();
    let mut x = x0.clone();
    let mut controls = Vec::with_capacity(horizon);
    let mut first_violation = None;
    for i in 0..horizon {
        let u = policy.control(&x);
        if first_violation.is_none() && !set.contains(&x, &u, ADMISSIBILITY_TOL) {
            first_violation = Some(i);
        }
        x = p.step_dynamics(&x, &u)?;
        controls.push(u);
    }
    if first_violation.is_none() && !set.contains_state(&x, ADMISSIBILITY_TOL) {
        first_violation = Some(horizon);
    }
    Ok(PolicyRun {
        trajectory: Trajectory::rollout(p, x0, controls)?,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{decay, example_cone, example_rotation_box};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn cone_feedback_from_apex_column() {
        let p = example_cone();
        let run = simulate_policy(&p, &BuiltinPolicy::ConeFeedback, &v(&[0.0, 0.0, 5.0]), 20).unwrap();
        assert_eq!(run.first_violation, None);
    }

    #[test]
    fn steady_control_keeps_steady_state() {
        let p = example_cone();
        let run = simulate_policy(&p, &BuiltinPolicy::Constant { u: vec![0.0] }, &v(&[0.0, 0.0, 0.0]), 10).unwrap();
        assert!(run.trajectory.states.iter().all(|x| x.amax() == 0.0));
    }

    #[test]
    fn zero_control_rotation_decay() {
        let p = example_rotation_box().problem;
        let x0 = v(&[0.3, -0.8]);
        let run = simulate_policy(&p, &BuiltinPolicy::Zero { m: 2 }, &x0, 30).unwrap();
        assert_eq!(run.first_violation, None);
        for (i, x) in run.trajectory.states.iter().enumerate() {
            assert!((x.norm() - decay().powi(i as i32) * x0.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn violations_are_reported() {
        let p = example_rotation_box().problem;
        let push = |_: &DVector<f64>| v(&[0.1, 0.1]);
        let run = simulate_policy(&p, &push, &v(&[0.95, 0.95]), 5).unwrap();
        assert!(run.first_violation.is_some());
        // the rotation carries (1, 1) out of the unit box in one step
        let run = simulate_policy(&p, &BuiltinPolicy::Zero { m: 2 }, &v(&[1.0, 1.0]), 3).unwrap();
        assert_eq!(run.first_violation, Some(1));
    }

    #[test]
    fn linear_policy() {
        let pol = BuiltinPolicy::Linear {
            gain: vec![vec![1.0, 2.0]],
            x_e: vec![1.0, 0.0],
            u_e: vec![0.5],
        };
        assert_eq!(pol.control(&v(&[2.0, 1.0]))[0], 0.5 - 3.0);
    }
}
