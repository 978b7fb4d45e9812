use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::decay::StabilizabilityWitness;
use crate::linalg::spectral_norm;
use crate::model::{Problem, Trajectory};
use crate::system_analysis::control_gain_m0;

/// `ũ(i) = P_{Ω⊥} u(i) + P_Ω u_e` with `Ω = ker B`.
///
/// `Bũ(i) = Bu(i)`, so the state trajectory is unchanged.
pub fn regularize_control(b: &DMatrix<f64>, controls: &[DVector<f64>], u_e: &DVector<f64>) -> Vec<DVector<f64>> {
    let gain = control_gain_m0(b);
    let anchor = gain.project_omega(u_e);
    controls.iter().map(|u| gain.project_omega_perp(u) + &anchor).collect()
}

/// Uniform bound `M` on the accumulated cost gap of the witness.
#[derive(Debug, Clone, Serialize)]
pub struct CostGapBound {
    /// Control envelope `‖ũ(i) − u_e‖ ≤ M1 e^{−ρ i}`.
    pub m1: f64,
    /// Stage envelope `ℓ(x(i), ũ(i)) − ℓ(x_e, u_e) ≤ M2 e^{−ρ i}`.
    pub m2: f64,
    /// `M2 / (1 − e^{−ρ})`.
    pub m: f64,
    /// Smallest non-zero singular value of `B` (`None` when `B = 0`).
    pub control_gain: Option<f64>,
    /// Largest observed per-stage gap of the regularized witness at each stage.
    pub stage_gaps: Vec<f64>,
}

/// Constants of the cost-gap bound from the witness envelope `(M0, ρ)`,
/// with `‖A‖` the spectral norm. `stage_gaps` collects the empirical gaps of
/// the witness trajectories after regularizing their controls.
pub fn cost_gap_bound(
    p: &Problem,
    witness: &StabilizabilityWitness,
    x_e: &DVector<f64>,
    u_e: &DVector<f64>,
) -> CostGapBound {
    let gain = control_gain_m0(p.b());
    let (m0, rho) = (witness.m0, witness.rho);
    let decay = (-rho).exp();
    let m1 = match gain.m0 {
        Some(g) => (m0 * decay + spectral_norm(p.a()) * m0) / g,
        None => 0.0,
    };
    let state_part = (spectral_norm(p.q()) * (2.0 * x_e.norm() + m0) + 2.0 * p.z().norm()) * m0;
    let control_part = (spectral_norm(p.r()) * (2.0 * u_e.norm() + m1) + 2.0 * p.v().norm()) * m1;
    let m2 = state_part + control_part;
    let steady_cost = p.stage_cost_unchecked(x_e, u_e);
    let mut stage_gaps: Vec<f64> = Vec::new();
    for t in &witness.trajectories {
        let reg = regularize_control(p.b(), &t.controls, u_e);
        for (i, (x, u)) in t.states.iter().zip(&reg).enumerate() {
            let gap = p.stage_cost_unchecked(x, u) - steady_cost;
            match stage_gaps.get_mut(i) {
                Some(g) => *g = g.max(gap),
                None => stage_gaps.push(gap),
            }
        }
    }
    CostGapBound {
        m1,
        m2,
        m: m2 / (1.0 - decay),
        control_gain: gain.m0,
        stage_gaps,
    }
}

/// `#{i < N : ‖x(i) − x_e‖² + ‖u(i) − u_e‖² > ε}`.
pub fn exceedance_count(traj: &Trajectory, x_e: &DVector<f64>, u_e: &DVector<f64>, eps: f64) -> usize {
    traj.deviations(x_e, u_e).iter().filter(|d| **d > eps).count()
}

/// `M_E / ε` with `M_E = (M + spread) / s`.
pub fn turnpike_bound(cost_gap: f64, rate: f64, storage_spread: f64, eps: f64) -> f64 {
    (cost_gap + storage_spread) / rate / eps
}
