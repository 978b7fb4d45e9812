use nalgebra::DMatrix;

use crate::linalg::symmetrize;

const MAX_DOUBLINGS: usize = 80;
const CONVERGENCE_RTOL: f64 = 1e-14;

/// Stabilizing solution of `X = AᵀXA − AᵀXB(R + BᵀXB)⁻¹BᵀXA + Q` by the
/// structured doubling algorithm. `Q` may be indefinite; `R` must be
/// invertible. Returns `None` when an iterate breaks down or the doubling
/// does not settle.
pub(crate) fn stabilizing_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r.clone().lu().try_inverse()?;
    let mut g = symmetrize(&(b * r_inv * b.transpose()));
    let mut h = symmetrize(q);
    let mut ak = a.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_DOUBLINGS {
        let w = &eye + &g * &h;
        let lu = w.lu();
        let w_inv_a = lu.solve(&ak)?;
        let w_inv_g = lu.solve(&g)?;
        let next_a = &ak * &w_inv_a;
        let next_g = symmetrize(&(&g + &ak * w_inv_g * ak.transpose()));
        let next_h = symmetrize(&(&h + ak.transpose() * &h * &w_inv_a));
        if !next_h.iter().chain(next_a.iter()).all(|v| v.is_finite()) {
            return None;
        }
        let change = (&next_h - &h).norm();
        h = next_h;
        g = next_g;
        ak = next_a;
        if change <= CONVERGENCE_RTOL * (1.0 + h.norm()) {
            return Some(h);
        }
    }
    None
}
