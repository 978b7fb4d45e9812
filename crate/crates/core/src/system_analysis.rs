//! Spectral and structural tests on `(A, B, C)`.
//!
//! Rank decisions use singular values relative to the largest one
//! ([`RANK_RTOL`]); unit-modulus decisions use [`UNIT_MODULUS_TOL`].

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{self, RANK_RTOL};
use crate::model::Problem;

pub const UNIT_MODULUS_TOL: f64 = 1e-8;

/// Relative distance under which two computed eigenvalues are merged.
const EIG_MERGE_TOL: f64 = 1e-9;

/// An eigenvalue `γ` of `A` with an eigenvector in `ker C`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnobservableMode {
    pub eigenvalue: Complex<f64>,
    pub multiplicity: usize,
    /// Unit eigenvector `w` with `Aw = γw` and `Cw = 0` (up to the rank tolerance).
    pub witness: DVector<Complex<f64>>,
}

impl UnobservableMode {
    pub fn modulus(&self) -> f64 {
        self.eigenvalue.norm()
    }
}

/// Distinct eigenvalues of `A` with multiplicities.
pub fn distinct_eigenvalues(a: &DMatrix<f64>) -> Vec<(Complex<f64>, usize)> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut eig = linalg::eigenvalues(a);
    eig.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap()
            .then(x.im.partial_cmp(&y.im).unwrap())
    });
    let mut out: Vec<(Complex<f64>, usize)> = Vec::new();
    for g in eig {
        match out
            .iter_mut()
            .find(|(h, _)| (*h - g).norm() <= EIG_MERGE_TOL * (1.0 + g.norm()))
        {
            Some(entry) => entry.1 += 1,
            None => out.push((g, 1)),
        }
    }
    out
}

/// PBH matrix `[A − γI; C]` and its smallest right singular pair.
fn pbh_deficiency(a: &DMatrix<f64>, c: &DMatrix<f64>, gamma: Complex<f64>) -> (bool, DVector<Complex<f64>>) {
    let n = a.nrows();
    let p = c.nrows();
    let mut m = DMatrix::<Complex<f64>>::zeros(n + p, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex::new(a[(i, j)], 0.0);
        }
        m[(i, i)] -= gamma;
    }
    for i in 0..p {
        for j in 0..n {
            m[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
        }
    }
    let (smin, smax, witness) = linalg::complex_min_singular(&m);
    // [A − γI; C] can vanish up to rounding (A = γI, C = 0), so the scale
    // also includes the data themselves
    let scale = smax.max(linalg::spectral_norm(a)).max(linalg::spectral_norm(c));
    let deficient = smin <= RANK_RTOL * scale || smax == 0.0;
    (deficient, witness)
}

/// Eigenvalues of `A` admitting an eigenvector in `ker C`.
pub fn unobservable_eigenvalues(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Vec<UnobservableMode> {
    distinct_eigenvalues(a)
        .into_iter()
        .filter_map(|(gamma, multiplicity)| {
            let (deficient, witness) = pbh_deficiency(a, c, gamma);
            deficient.then_some(UnobservableMode {
                eigenvalue: gamma,
                multiplicity,
                witness,
            })
        })
        .collect()
}

pub fn has_unit_modulus_unobservable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    unobservable_eigenvalues(a, c)
        .iter()
        .any(|mode| (mode.modulus() - 1.0).abs() <= UNIT_MODULUS_TOL)
}

/// PBH detectability: every eigenvalue with `|γ| ≥ 1` is observable.
pub fn is_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    distinct_eigenvalues(a)
        .into_iter()
        .filter(|(g, _)| g.norm() >= 1.0 - UNIT_MODULUS_TOL)
        .all(|(g, _)| !pbh_deficiency(a, c, g).0)
}

/// Orthonormal basis (columns) of `ker [A − I  B]`.
pub fn kernel_basis_steady(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut block = DMatrix::zeros(n, n + m);
    block
        .view_mut((0, 0), (n, n))
        .copy_from(&(a - DMatrix::identity(n, n)));
    block.view_mut((0, n), (n, m)).copy_from(b);
    linalg::null_space(&block, RANK_RTOL)
}

/// Whether `diag(Q, R)` is positive definite on `ker [A − I  B]`.
pub fn steady_cost_positive_definite(p: &Problem) -> bool {
    let basis = kernel_basis_steady(p.a(), p.b());
    if basis.ncols() == 0 {
        return true;
    }
    let d = p.cost_hessian();
    let reduced = basis.transpose() * &d * &basis;
    let (lo, _) = linalg::sym_eig_range(&reduced);
    let scale = linalg::spectral_norm(&d).max(f64::MIN_POSITIVE);
    lo > RANK_RTOL * scale
}

/// Geometry of `Ω = ker B` used when regularizing witness controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGain {
    /// Smallest non-zero singular value of `B`; `None` when `B = 0`.
    pub m0: Option<f64>,
    pub omega_basis: DMatrix<f64>,
    pub omega_perp_basis: DMatrix<f64>,
}

impl ControlGain {
    pub fn is_degenerate(&self) -> bool {
        self.m0.is_none()
    }

    pub fn project_omega_perp(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.omega_perp_basis * (self.omega_perp_basis.transpose() * u)
    }

    pub fn project_omega(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.omega_basis * (self.omega_basis.transpose() * u)
    }
}

pub fn control_gain_m0(b: &DMatrix<f64>) -> ControlGain {
    let (row_space, null, values) = linalg::row_and_null_space(b, RANK_RTOL);
    let r = row_space.ncols();
    ControlGain {
        m0: (r > 0).then(|| values[r - 1]),
        omega_basis: null,
        omega_perp_basis: row_space,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueInfo {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub multiplicity: usize,
    pub unobservable: bool,
}

/// Summary emitted by `analyze`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<EigenvalueInfo>,
    pub detectable: bool,
    pub unit_modulus_unobservable: bool,
    pub steady_cost_positive_definite: bool,
    /// Columns of an orthonormal basis of `ker [A − I  B]`, one per entry.
    pub kernel_basis: Vec<Vec<f64>>,
    pub omega_basis: Vec<Vec<f64>>,
    pub m0: Option<f64>,
    pub degenerate_b: bool,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

pub fn analyze(p: &Problem) -> SpectralReport {
    let unobs = unobservable_eigenvalues(p.a(), p.c());
    let eigenvalues = distinct_eigenvalues(p.a())
        .into_iter()
        .map(|(g, mult)| EigenvalueInfo {
            re: g.re,
            im: g.im,
            modulus: g.norm(),
            multiplicity: mult,
            unobservable: unobs.iter().any(|u| (u.eigenvalue - g).norm() == 0.0),
        })
        .collect();
    let gain = control_gain_m0(p.b());
    SpectralReport {
        eigenvalues,
        detectable: is_detectable(p.a(), p.c()),
        unit_modulus_unobservable: has_unit_modulus_unobservable(p.a(), p.c()),
        steady_cost_positive_definite: steady_cost_positive_definite(p),
        kernel_basis: columns(&kernel_basis_steady(p.a(), p.b())),
        omega_basis: columns(&gain.omega_basis),
        m0: gain.m0,
        degenerate_b: gain.is_degenerate(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use std::f64::consts::FRAC_PI_4;

    fn mat(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    #[test]
    fn scalar_identity_unobserved() {
        let modes = unobservable_eigenvalues(&mat(1, 1, &[1.0]), &mat(1, 1, &[0.0]));
        assert_eq!(modes.len(), 1);
        assert!((modes[0].eigenvalue - Complex::new(1.0, 0.0)).norm() < 1e-15);
        assert!((modes[0].witness[0].norm() - 1.0).abs() < 1e-15);
        assert!(!is_detectable(&mat(1, 1, &[1.0]), &mat(1, 1, &[0.0])));
    }

    #[test]
    fn rotation_example_modes() {
        let p = scenarios::example_rotation_box().problem;
        let modes = unobservable_eigenvalues(p.a(), p.c());
        assert_eq!(modes.len(), 2);
        let d = (-0.1f64).exp();
        for mode in &modes {
            assert!((mode.modulus() - d).abs() < 1e-14);
            assert!((mode.eigenvalue.im.abs() - d * FRAC_PI_4.sin()).abs() < 1e-14);
            // witness is an eigenvector
            let a = p.a().map(|x| Complex::new(x, 0.0));
            let res = &a * &mode.witness - &mode.witness * mode.eigenvalue;
            assert!(res.norm() < 1e-12);
        }
        assert!(is_detectable(p.a(), p.c()));
        assert!(!has_unit_modulus_unobservable(p.a(), p.c()));
    }

    #[test]
    fn diagonal_partially_observed() {
        let modes = unobservable_eigenvalues(&mat(2, 2, &[2.0, 0.0, 0.0, 0.5]), &mat(1, 2, &[1.0, 0.0]));
        assert_eq!(modes.len(), 1);
        assert!((modes[0].eigenvalue.re - 0.5).abs() < 1e-15);
        assert!((modes[0].witness[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_modulus_cases() {
        let rot = mat(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(has_unit_modulus_unobservable(&rot, &DMatrix::zeros(2, 2)));
        assert!(!has_unit_modulus_unobservable(&mat(1, 1, &[0.0]), &mat(1, 1, &[0.0])));
        let cone = scenarios::example_cone();
        assert!(!has_unit_modulus_unobservable(cone.a(), cone.c()));
        assert!(is_detectable(cone.a(), cone.c()));
    }

    #[test]
    fn steady_kernels() {
        let k = kernel_basis_steady(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2));
        assert_eq!(k.ncols(), 2);
        for col in k.column_iter() {
            assert!(col.rows(2, 2).norm() < 1e-14);
        }
        let cone = scenarios::example_cone();
        let k = kernel_basis_steady(cone.a(), cone.b());
        assert_eq!(k.ncols(), 1);
        assert!((k[(2, 0)].abs() - 1.0).abs() < 1e-12);
        let k = kernel_basis_steady(&mat(1, 1, &[0.0]), &mat(1, 1, &[0.0]));
        assert_eq!(k.ncols(), 1);
        assert!(k[(0, 0)].abs() < 1e-15 && (k[(1, 0)].abs() - 1.0).abs() < 1e-15);
        // the rotation example has a two-dimensional family {(x, (I - A)x)}
        let p = scenarios::example_rotation_box().problem;
        let k = kernel_basis_steady(p.a(), p.b());
        assert_eq!(k.ncols(), 2);
        assert!((p.steady_matrix() * &k).amax() < 1e-12);
    }

    #[test]
    fn reduced_cost_definiteness() {
        assert!(steady_cost_positive_definite(&scenarios::example_cone()));
        assert!(steady_cost_positive_definite(&scenarios::example_rotation_box().problem));
        let p = Problem::new(
            mat(1, 1, &[1.0]),
            mat(1, 1, &[0.0]),
            mat(1, 1, &[0.0]),
            mat(1, 1, &[1.0]),
            DVector::zeros(1),
            DVector::zeros(1),
            0.0,
            crate::model::ConstraintSet::full(1, 1),
        )
        .unwrap();
        assert!(!steady_cost_positive_definite(&p));
    }

    #[test]
    fn gain_m0_cases() {
        let g = control_gain_m0(&mat(3, 1, &[0.0, 0.0, -1.0]));
        assert!((g.m0.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g.omega_basis.ncols(), 0);
        let g = control_gain_m0(&DMatrix::zeros(2, 2));
        assert!(g.is_degenerate());
        assert_eq!(g.omega_basis.ncols(), 2);
        let g = control_gain_m0(&mat(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert!((g.m0.unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(g.omega_basis.ncols(), 1);
        assert!((g.omega_basis[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
