use nalgebra::{DMatrix, DVector};

use super::constraint::ConstraintSet;
use crate::error::{check_dim, Error, Result};

pub const PSD_TOL: f64 = 1e-9;
pub const PD_TOL: f64 = 1e-9;
const FACTOR_RTOL: f64 = 1e-9;
/// Eigenvalues of `Q` below this multiple of `ε·λ_max` are rounding noise;
/// their square roots would put `√ε`-sized entries into `C`.
const ROUNDING_FACTOR: f64 = 64.0;

/// Factor `Q = CᵀC` (symmetric PSD square root) and `R = KᵀK` (upper-triangular Cholesky factor).
pub fn factor_cost(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_symmetric("Q", q)?;
    check_symmetric("R", r)?;
    let eq = crate::linalg::symmetrize(q).symmetric_eigen();
    let qmin = eq.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if q.nrows() > 0 && qmin < -PSD_TOL {
        return Err(Error::NotPsd { eigenvalue: qmin });
    }
    let (rmin, _) = crate::linalg::sym_eig_range(r);
    if r.nrows() > 0 && rmin < PD_TOL {
        return Err(Error::NotPd { eigenvalue: rmin });
    }
    let floor = ROUNDING_FACTOR * f64::EPSILON * eq.eigenvalues.amax();
    let roots = eq.eigenvalues.map(|l| if l > floor { l.sqrt() } else { 0.0 });
    let c = &eq.eigenvectors * DMatrix::from_diagonal(&roots) * eq.eigenvectors.transpose();
    let c = crate::linalg::symmetrize(&c);
    let chol = crate::linalg::symmetrize(r)
        .cholesky()
        .ok_or(Error::NotPd { eigenvalue: rmin })?;
    let k = chol.l().transpose();

    let q_err = (c.transpose() * &c - q).norm();
    if q_err > FACTOR_RTOL * (1.0 + q.norm()) {
        return Err(Error::BadFactor("Q", q_err / (1.0 + q.norm())));
    }
    let r_err = (k.transpose() * &k - r).norm();
    if r_err > FACTOR_RTOL * (1.0 + r.norm()) {
        return Err(Error::BadFactor("R", r_err / (1.0 + r.norm())));
    }
    Ok((c, k))
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSymmetric(name));
    }
    if (m - m.transpose()).norm() > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::NotSymmetric(name));
    }
    Ok(())
}

/// Constrained LQ problem data: dynamics `x⁺ = Ax + Bu`, stage cost
/// `ℓ(x,u) = xᵀQx + uᵀRu + 2zᵀx + 2vᵀu + c` and the constraint set `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    c_factor: DMatrix<f64>,
    k_factor: DMatrix<f64>,
    z: DVector<f64>,
    v: DVector<f64>,
    offset: f64,
    set: ConstraintSet,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        z: DVector<f64>,
        v: DVector<f64>,
        offset: f64,
        set: ConstraintSet,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        let m = b.ncols();
        check_dim("Q rows", n, q.nrows())?;
        check_dim("Q columns", n, q.ncols())?;
        check_dim("R rows", m, r.nrows())?;
        check_dim("R columns", m, r.ncols())?;
        check_dim("z length", n, z.len())?;
        check_dim("v length", m, v.len())?;
        check_dim("constraint state dimension", n, set.state_dim())?;
        check_dim("constraint control dimension", m, set.control_dim())?;
        let (c_factor, k_factor) = factor_cost(&q, &r)?;
        Ok(Self {
            a,
            b,
            q: crate::linalg::symmetrize(&q),
            r: crate::linalg::symmetrize(&r),
            c_factor,
            k_factor,
            z,
            v,
            offset,
            set,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    /// `C` with `Q = CᵀC`.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c_factor
    }
    /// `K` with `R = KᵀK`.
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k_factor
    }
    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }
    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }
    pub fn set(&self) -> &ConstraintSet {
        &self.set
    }

    /// Same data with a different constraint set.
    pub fn with_set(&self, set: ConstraintSet) -> Result<Self> {
        check_dim("constraint state dimension", self.n(), set.state_dim())?;
        check_dim("constraint control dimension", self.m(), set.control_dim())?;
        let mut out = self.clone();
        out.set = set;
        Ok(out)
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        check_dim("state", self.n(), x.len())?;
        check_dim("control", self.m(), u.len())?;
        Ok(self.stage_cost_unchecked(x, u))
    }

    pub(crate) fn stage_cost_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)) + 2.0 * self.z.dot(x) + 2.0 * self.v.dot(u) + self.offset
    }

    /// Gradient of `ℓ` at `(x, u)`, stacked.
    pub fn stage_cost_gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let gx = (&self.q * x + &self.z) * 2.0;
        let gu = (&self.r * u + &self.v) * 2.0;
        crate::linalg::concat(&gx, &gu)
    }

    pub fn step_dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state", self.n(), x.len())?;
        check_dim("control", self.m(), u.len())?;
        Ok(self.step_unchecked(x, u))
    }

    pub(crate) fn step_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `diag(Q, R)`.
    pub fn cost_hessian(&self) -> DMatrix<f64> {
        crate::linalg::block_diag(&self.q, &self.r)
    }

    /// `(z, v)`.
    pub fn cost_linear(&self) -> DVector<f64> {
        crate::linalg::concat(&self.z, &self.v)
    }

    /// `[A - I  B]`.
    pub fn steady_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n + self.m());
        m.view_mut((0, 0), (n, n))
            .copy_from(&(&self.a - DMatrix::identity(n, n)));
        m.view_mut((0, n), (n, self.m())).copy_from(&self.b);
        m
    }
}
