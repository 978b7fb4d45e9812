//! Log-barrier Newton method for small linear matrix inequalities.

use nalgebra::{DMatrix, DVector};

const MAX_OUTER: usize = 60;
const MAX_NEWTON: usize = 100;
const DECREMENT_TOL: f64 = 1e-10;
const GAP_RTOL: f64 = 1e-10;

/// `F(y) = F₀ + Σₖ yₖ Fₖ`, required to be positive definite.
pub(crate) struct AffineMatrix {
    pub constant: DMatrix<f64>,
    pub terms: Vec<DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn value(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (t, yk) in self.terms.iter().zip(y.iter()) {
            out += t * *yk;
        }
        out
    }
}

fn neg_log_det(constraints: &[AffineMatrix], y: &DVector<f64>) -> Option<f64> {
    let mut total = 0.0;
    for c in constraints {
        let chol = c.value(y).cholesky()?;
        total -= 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Some(total)
}

/// Minimize `cᵀy` subject to every `F(y) ≻ 0`, starting from a strictly
/// feasible `y`. `stop(y, lower_bound)` is consulted after every Newton step
/// and ends the search early; `lower_bound` is the duality-gap bound from the
/// last centered point. Returns `None` if the start is infeasible.
pub(crate) fn minimize(
    c: &DVector<f64>,
    constraints: &[AffineMatrix],
    start: DVector<f64>,
    stop: impl Fn(&DVector<f64>, f64) -> bool,
) -> Option<DVector<f64>> {
    let dim = c.len();
    let total_rows: usize = constraints.iter().map(|f| f.constant.nrows()).sum();
    let mut y = start;
    neg_log_det(constraints, &y)?;
    let mut weight = 1.0;
    let mut lower_bound = f64::NEG_INFINITY;
    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_NEWTON {
            let mut grad = c * weight;
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for f in constraints {
                let inv = f.value(&y).cholesky()?.inverse();
                let scaled: Vec<DMatrix<f64>> = f.terms.iter().map(|t| &inv * t).collect();
                for k in 0..dim {
                    grad[k] -= scaled[k].trace();
                    for l in k..dim {
                        let v = scaled[k].dot(&scaled[l].transpose());
                        hess[(k, l)] += v;
                        if l != k {
                            hess[(l, k)] += v;
                        }
                    }
                }
            }
            let reg = 1e-12 * (1.0 + hess.diagonal().amax());
            for k in 0..dim {
                hess[(k, k)] += reg;
            }
            let Some(chol) = hess.cholesky() else { break };
            let step = -chol.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= DECREMENT_TOL {
                break;
            }
            let phi = |v: &DVector<f64>| neg_log_det(constraints, v).map(|b| weight * c.dot(v) + b);
            let current = phi(&y)?;
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-14 {
                let trial = &y + &step * t;
                if let Some(val) = phi(&trial) {
                    if val <= current - 0.25 * t * decrement {
                        y = trial;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
            if stop(&y, lower_bound) {
                return Some(y);
            }
        }
        let objective = c.dot(&y);
        let gap = total_rows as f64 / weight;
        lower_bound = objective - gap;
        if stop(&y, lower_bound) || gap <= GAP_RTOL * (1.0 + objective.abs()) {
            break;
        }
        weight *= 8.0;
    }
    Some(y)
}
