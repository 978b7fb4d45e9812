//! Riccati recursion for the equality-constrained LQ subproblems
//!
//! `min Σ_{i<N} ½xᵢᵀWxᵢ + qᵢᵀxᵢ + ½uᵢᵀVuᵢ + rᵢᵀuᵢ + ½x_NᵀT x_N + tᵀx_N`
//! subject to `x(i+1) = Ax(i) + Bu(i)` and a fixed `x(0)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) struct LqFactor {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    gains: Vec<DMatrix<f64>>,
    huu: Vec<Cholesky<f64, Dyn>>,
    hux: Vec<DMatrix<f64>>,
}

impl LqFactor {
    /// Backward sweep for time-invariant weights. Requires `V ≻ 0` and `W, T ⪰ 0`.
    pub(crate) fn new(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        state_weight: &DMatrix<f64>,
        control_weight: &DMatrix<f64>,
        terminal_weight: &DMatrix<f64>,
        horizon: usize,
    ) -> Self {
        let mut gains = vec![DMatrix::zeros(0, 0); horizon];
        let mut huu = Vec::with_capacity(horizon);
        let mut hux = vec![DMatrix::zeros(0, 0); horizon];
        let mut value = terminal_weight.clone();
        for i in (0..horizon).rev() {
            let pb = &value * b;
            let h_uu = crate::linalg::symmetrize(&(control_weight + b.transpose() * &pb));
            let h_ux = pb.transpose() * a;
            let chol = Cholesky::new(h_uu).expect("control weight must be positive definite");
            let gain = -chol.solve(&h_ux);
            value = crate::linalg::symmetrize(&(state_weight + a.transpose() * &value * a + h_ux.transpose() * &gain));
            gains[i] = gain;
            hux[i] = h_ux;
            huu.push(chol);
        }
        huu.reverse();
        Self {
            a: a.clone(),
            b: b.clone(),
            gains,
            huu,
            hux,
        }
    }

    pub(crate) fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Forward solve for the given linear terms; returns states `0..=N` and controls.
    pub(crate) fn solve(
        &self,
        x0: &DVector<f64>,
        state_linear: &[DVector<f64>],
        control_linear: &[DVector<f64>],
        terminal_linear: &DVector<f64>,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let horizon = self.horizon();
        let mut offsets = vec![DVector::zeros(0); horizon];
        let mut p = terminal_linear.clone();
        for i in (0..horizon).rev() {
            let h_u = &control_linear[i] + self.b.transpose() * &p;
            let k = -self.huu[i].solve(&h_u);
            p = &state_linear[i] + self.a.transpose() * &p + self.hux[i].transpose() * &k;
            offsets[i] = k;
        }
        let mut states = Vec::with_capacity(horizon + 1);
        let mut controls = Vec::with_capacity(horizon);
        states.push(x0.clone());
        for i in 0..horizon {
            let x = &states[i];
            let u = &self.gains[i] * x + &offsets[i];
            let next = &self.a * x + &self.b * &u;
            controls.push(u);
            states.push(next);
        }
        (states, controls)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_kkt_solution() {
        // scalar system, N = 2, verify against the condensed normal equations
        let a = DMatrix::from_element(1, 1, 0.9);
        let b = DMatrix::from_element(1, 1, 0.5);
        let w = DMatrix::from_element(1, 1, 2.0);
        let v = DMatrix::from_element(1, 1, 1.0);
        let t = DMatrix::from_element(1, 1, 3.0);
        let f = LqFactor::new(&a, &b, &w, &v, &t, 2);
        let ql = vec![DVector::from_element(1, 0.3), DVector::from_element(1, -0.2)];
        let rl = vec![DVector::from_element(1, 0.1), DVector::from_element(1, 0.4)];
        let tl = DVector::from_element(1, -1.0);
        let x0 = DVector::from_element(1, 1.0);
        let (xs, us) = f.solve(&x0, &ql, &rl, &tl);
        // objective in (u0, u1): x1 = 0.9 + 0.5u0, x2 = 0.9x1 + 0.5u1
        let obj = |u0: f64, u1: f64| {
            let x1 = 0.9 + 0.5 * u0;
            let x2 = 0.9 * x1 + 0.5 * u1;
            0.5 * 2.0 * (1.0 + x1 * x1) + 0.3 - 0.2 * x1 + 0.5 * (u0 * u0 + u1 * u1) + 0.1 * u0 + 0.4 * u1
                + 1.5 * x2 * x2
                - x2
        };
        let (u0, u1) = (us[0][0], us[1][0]);
        let h = 1e-6;
        let d0 = (obj(u0 + h, u1) - obj(u0 - h, u1)) / (2.0 * h);
        let d1 = (obj(u0, u1 + h) - obj(u0, u1 - h)) / (2.0 * h);
        assert!(d0.abs() < 1e-7 && d1.abs() < 1e-7);
        assert!((xs[2][0] - (0.9 * xs[1][0] + 0.5 * u1)).abs() < 1e-15);
    }
}
