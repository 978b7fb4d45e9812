use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::model::Problem;

/// Finite-horizon cost as a quadratic in the stacked controls
/// `ū = (u(0), …, u(N−1))`:
///
/// `J(ū) = ūᵀ P3 ū + 2 x₀ᵀ P2 ū + 2 qᵀ ū + P1`.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub horizon: usize,
    pub p1: f64,
    pub p2: DMatrix<f64>,
    pub p3: DMatrix<f64>,
    pub q: DVector<f64>,
    /// `x(i) = Φ(i) x₀ + Γ(i) ū` for `i = 0..=N`.
    pub phi: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
    x0: DVector<f64>,
}

impl CondensedQp {
    /// Linear term `f = P2ᵀ x₀ + q` of `J(ū) = ūᵀ P3 ū + 2 fᵀ ū + P1`.
    pub fn linear(&self) -> DVector<f64> {
        self.p2.transpose() * &self.x0 + &self.q
    }

    pub fn cost(&self, controls: &DVector<f64>) -> f64 {
        controls.dot(&(&self.p3 * controls)) + 2.0 * self.linear().dot(controls) + self.p1
    }

    pub fn state(&self, i: usize, controls: &DVector<f64>) -> DVector<f64> {
        &self.phi[i] * &self.x0 + &self.gamma[i] * controls
    }
}

pub fn condense(p: &Problem, x0: &DVector<f64>, horizon: usize) -> Result<CondensedQp> {
    check_dim("initial state", p.n(), x0.len())?;
    let (n, m) = (p.n(), p.m());
    let dim = m * horizon;
    let mut phi = vec![DMatrix::identity(n, n)];
    let mut gamma = vec![DMatrix::zeros(n, dim)];
    for i in 0..horizon {
        let mut next = p.a() * &gamma[i];
        next.view_mut((0, m * i), (n, m)).copy_from(p.b());
        gamma.push(next);
        phi.push(p.a() * &phi[i]);
    }
    let mut p3 = DMatrix::zeros(dim, dim);
    let mut p2 = DMatrix::zeros(n, dim);
    let mut q = DVector::zeros(dim);
    let mut p1 = 0.0;
    for i in 0..horizon {
        let qg = p.q() * &gamma[i];
        p3 += gamma[i].transpose() * &qg;
        p3.view_mut((m * i, m * i), (m, m)).add_assign(p.r());
        p2 += phi[i].transpose() * &qg;
        q += gamma[i].transpose() * p.z();
        q.rows_mut(m * i, m).add_assign(p.v());
        let xi = &phi[i] * x0;
        p1 += xi.dot(&(p.q() * &xi)) + 2.0 * p.z().dot(&xi) + p.offset();
    }
    Ok(CondensedQp {
        horizon,
        p1,
        p2,
        p3: crate::linalg::symmetrize(&p3),
        q,
        phi,
        gamma,
        x0: x0.clone(),
    })
}
