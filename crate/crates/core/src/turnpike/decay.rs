use nalgebra::DVector;
use serde::Serialize;

use super::policy::{simulate_policy, FeedbackPolicy};
use crate::model::{Problem, Trajectory};
use crate::{Error, Result};

/// Rate reported when a trajectory sits exactly at the steady state.
pub const DEFAULT_RATE: f64 = 1.0;
const ZERO_DEVIATION: f64 = 1e-12;
const ENVELOPE_SLACK: f64 = 1e-9;

/// Envelope `‖x(i) − x_e‖ ≤ M0 e^{−ρ i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub m0: f64,
    pub rho: f64,
    /// Every deviation was below `1e−12`.
    pub degenerate: bool,
}

fn state_deviations(traj: &Trajectory, x_e: &DVector<f64>) -> Vec<f64> {
    traj.states.iter().map(|x| (x - x_e).norm()).collect()
}

/// Smallest `M0` with `d_i ≤ M0 e^{−ρ i}` for all `i`.
fn envelope(deviations: &[f64], rho: f64) -> f64 {
    deviations
        .iter()
        .enumerate()
        .map(|(i, d)| d * (rho * i as f64).exp())
        .fold(0.0, f64::max)
}

/// Least-squares fit of `log‖x(i) − x_e‖` against `i`.
pub fn fit_exponential_decay(traj: &Trajectory, x_e: &DVector<f64>) -> Result<DecayFit> {
    fit_exponential_decay_after(traj, x_e, 0)
}

/// As [`fit_exponential_decay`], ignoring the first `skip` indices in the
/// regression. `M0` is still inflated to cover every index.
pub fn fit_exponential_decay_after(traj: &Trajectory, x_e: &DVector<f64>, skip: usize) -> Result<DecayFit> {
    let dev = state_deviations(traj, x_e);
    if dev.iter().all(|d| *d <= ZERO_DEVIATION) {
        return Ok(DecayFit {
            m0: 0.0,
            rho: DEFAULT_RATE,
            degenerate: true,
        });
    }
    let last = *dev.last().unwrap();
    if !(last < dev[0]) {
        return Err(Error::NotDecaying);
    }
    let samples: Vec<(f64, f64)> = dev
        .iter()
        .enumerate()
        .skip(skip)
        .filter(|(_, d)| **d > ZERO_DEVIATION)
        .map(|(i, d)| (i as f64, d.ln()))
        .collect();
    let rho = if samples.len() >= 2 {
        let k = samples.len() as f64;
        let mean_i = samples.iter().map(|s| s.0).sum::<f64>() / k;
        let mean_l = samples.iter().map(|s| s.1).sum::<f64>() / k;
        let sxy: f64 = samples.iter().map(|s| (s.0 - mean_i) * (s.1 - mean_l)).sum();
        let sxx: f64 = samples.iter().map(|s| (s.0 - mean_i).powi(2)).sum();
        -sxy / sxx
    } else {
        // the deviation vanishes after a single step: any rate fits
        DEFAULT_RATE
    };
    if !(rho > 0.0) {
        return Err(Error::NotDecaying);
    }
    Ok(DecayFit {
        m0: envelope(&dev, rho),
        rho,
        degenerate: false,
    })
}

/// Empirical stabilizability constants over a set of initial states.
#[derive(Debug, Clone, Serialize)]
pub struct StabilizabilityWitness {
    pub m0: f64,
    pub rho: f64,
    pub verified_horizon: usize,
    pub points: usize,
    /// Closed-loop trajectories, one per initial state.
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

impl StabilizabilityWitness {
    /// Largest `‖x(i) − x_e‖ − M0 e^{−ρ i}` over all stored trajectories.
    pub fn envelope_excess(&self, x_e: &DVector<f64>) -> f64 {
        self.trajectories
            .iter()
            .flat_map(|t| {
                state_deviations(t, x_e)
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| d - self.m0 * (-self.rho * i as f64).exp())
                    .collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Simulate `policy` from every point, check admissibility and fit one
/// envelope valid for all of them. The rate is the slowest fitted rate.
pub fn build_witness(
    p: &Problem,
    policy: &dyn FeedbackPolicy,
    points: &[DVector<f64>],
    x_e: &DVector<f64>,
    horizon: usize,
    skip: usize,
) -> Result<StabilizabilityWitness> {
    let mut trajectories = Vec::with_capacity(points.len());
    let mut rho = f64::INFINITY;
    for (j, x0) in points.iter().enumerate() {
        let run = simulate_policy(p, policy, x0, horizon)?;
        if let Some(step) = run.first_violation {
            return Err(Error::WitnessInadmissible { point: j, step });
        }
        let fit = fit_exponential_decay_after(&run.trajectory, x_e, skip)?;
        if !fit.degenerate {
            rho = rho.min(fit.rho);
        }
        trajectories.push(run.trajectory);
    }
    if !rho.is_finite() {
        rho = DEFAULT_RATE;
    }
    let m0 = trajectories
        .iter()
        .map(|t| envelope(&state_deviations(t, x_e), rho))
        .fold(0.0, f64::max);
    let witness = StabilizabilityWitness {
        m0,
        rho,
        verified_horizon: horizon,
        points: points.len(),
        trajectories,
    };
    debug_assert!(witness.envelope_excess(x_e) <= ENVELOPE_SLACK);
    Ok(witness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{example_cone, example_rotation_box};
    use crate::turnpike::BuiltinPolicy;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn rotation_decay_is_exact() {
        let p = example_rotation_box().problem;
        let x0 = v(&[0.6, 0.5]);
        let run = simulate_policy(&p, &BuiltinPolicy::Zero { m: 2 }, &x0, 40).unwrap();
        let fit = fit_exponential_decay(&run.trajectory, &v(&[0.0, 0.0])).unwrap();
        assert!((fit.rho - 0.1).abs() < 1e-6);
        assert!((fit.m0 - x0.norm()).abs() < 1e-6);
        assert!(!fit.degenerate);
    }

    #[test]
    fn constant_trajectory_is_degenerate() {
        let p = example_cone();
        let run = simulate_policy(&p, &BuiltinPolicy::Constant { u: vec![0.0] }, &v(&[0.0, 0.0, 0.0]), 10).unwrap();
        let fit = fit_exponential_decay(&run.trajectory, &v(&[0.0, 0.0, 0.0])).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.m0, 0.0);
        assert_eq!(fit.rho, DEFAULT_RATE);
    }

    #[test]
    fn cone_closed_loop_rate_after_transient() {
        let p = example_cone();
        let run = simulate_policy(&p, &BuiltinPolicy::ConeFeedback, &v(&[3.0, 4.0, 6.0]), 60).unwrap();
        let fit = fit_exponential_decay_after(&run.trajectory, &v(&[0.0, 0.0, 0.0]), 5).unwrap();
        assert!((fit.rho - 0.1).abs() < 1e-6, "{}", fit.rho);
        let dev = state_deviations(&run.trajectory, &v(&[0.0, 0.0, 0.0]));
        for (i, d) in dev.iter().enumerate() {
            assert!(*d <= fit.m0 * (-fit.rho * i as f64).exp() + ENVELOPE_SLACK);
        }
    }

    #[test]
    fn growing_trajectory_is_rejected() {
        let p = example_rotation_box().problem;
        let t = Trajectory::rollout(&p, &v(&[0.1, 0.0]), vec![v(&[0.1, 0.1]); 5]).unwrap();
        assert!(matches!(fit_exponential_decay(&t, &v(&[0.0, 0.0])), Err(Error::NotDecaying)));
    }

    #[test]
    fn witness_envelope_holds() {
        let p = example_cone();
        let pts = vec![v(&[3.0, 4.0, 5.0]), v(&[0.0, 1.0, 2.0]), v(&[0.0, 0.0, 0.0])];
        let w = build_witness(&p, &BuiltinPolicy::ConeFeedback, &pts, &v(&[0.0, 0.0, 0.0]), 100, 5).unwrap();
        assert!(w.envelope_excess(&v(&[0.0, 0.0, 0.0])) <= ENVELOPE_SLACK);
        assert!((w.rho - 0.1).abs() < 1e-6);
        assert!(w.m0 >= 5.0 * 2f64.sqrt() - 1e-12);
    }

    #[test]
    fn inadmissible_witness() {
        let p = example_rotation_box().problem;
        let push = |_: &DVector<f64>| v(&[0.1, 0.1]);
        let err = build_witness(&p, &push, &[v(&[0.95, 0.95])], &v(&[0.0, 0.0]), 5, 0).unwrap_err();
        assert!(matches!(err, Error::WitnessInadmissible { point: 0, .. }));
    }
}
