//! Quadratic storage functions and strict dissipativity of the rotated cost.
//!
//! The storage is `V(x) = xᵀPx + ⟨w, x⟩` where `P` satisfies
//! `M(P, s) ⪯ 0` for the block matrix returned by [`lmi_matrix`] and
//! `w = −λ − 2Px_e` comes from the steady-state multipliers.

mod lmi;
mod riccati;
mod verify;

pub use verify::{verify_strict_dissipativity, DissipationReport, DEFAULT_SAMPLES};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{sym_eig_range, symmetrize};
use crate::model::Problem;
use crate::steady_state::{certified_steady_state, SteadyStateCertificate};
use crate::system_analysis::is_detectable;
use crate::{Error, Result};

use lmi::AffineMatrix;

/// Smallest rate tried by [`max_dissipation_rate`].
pub const MIN_RATE: f64 = 1e-12;
const BISECTION_STEPS: usize = 40;
const LMI_TOL: f64 = 1e-9;
const PD_RTOL: f64 = 1e-9;
const PD_HALVINGS: usize = 30;

/// Largest eigenvalue of `M(P, s)` a rate `s` may leave.
///
/// Capping at `s/2` means feasibility at `s` always yields `M(P, s/2) ⪯ 0`.
pub fn acceptance_tol(s: f64) -> f64 {
    LMI_TOL.min(s / 2.0)
}

/// `M(P, s) = [[AᵀPA − P − Q + sI, AᵀPB], [BᵀPA, BᵀPB − R + sI]]`.
pub fn lmi_matrix(p: &Problem, storage: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let (n, m) = (p.n(), p.m());
    let (a, b) = (p.a(), p.b());
    let mut out = DMatrix::zeros(n + m, n + m);
    let pa = storage * a;
    let pb = storage * b;
    out.view_mut((0, 0), (n, n))
        .copy_from(&(a.transpose() * &pa - storage - p.q() + DMatrix::identity(n, n) * s));
    let cross = a.transpose() * &pb;
    out.view_mut((0, n), (n, m)).copy_from(&cross);
    out.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
    out.view_mut((n, n), (m, m))
        .copy_from(&(b.transpose() * &pb - p.r() + DMatrix::identity(m, m) * s));
    symmetrize(&out)
}

/// `λ_max(M(P, s))`.
pub fn lmi_margin(p: &Problem, storage: &DMatrix<f64>, s: f64) -> f64 {
    sym_eig_range(&lmi_matrix(p, storage, s)).1
}

fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

fn sym_coords(storage: &DMatrix<f64>) -> Vec<f64> {
    let n = storage.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(storage[(i, j)]);
        }
    }
    out
}

fn from_coords(n: usize, y: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    for (e, v) in sym_basis(n).iter().zip(y.iter()) {
        out += e * *v;
    }
    out
}

/// Linear part of `P ↦ M(P, s)` on the symmetric basis.
fn lmi_terms(p: &Problem, basis: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let zero_rate = lmi_matrix(p, &DMatrix::zeros(p.n(), p.n()), 0.0);
    basis.iter().map(|e| lmi_matrix(p, e, 0.0) - &zero_rate).collect()
}

fn storage_bound(p: &Problem, start: &DMatrix<f64>) -> f64 {
    (1e6 * (1.0 + p.q().norm() + p.r().norm())).max(10.0 * start.norm())
}

/// Box `−βI ≺ P ≺ βI` in coordinates `(P, extra…)`.
fn storage_box(n: usize, basis: &[DMatrix<f64>], extra: usize, beta: f64) -> [AffineMatrix; 2] {
    let zeros = || vec![DMatrix::zeros(n, n); extra];
    let upper: Vec<DMatrix<f64>> = basis.iter().map(|e| -e).chain(zeros()).collect();
    let lower: Vec<DMatrix<f64>> = basis.iter().cloned().chain(zeros()).collect();
    [
        AffineMatrix {
            constant: DMatrix::identity(n, n) * beta,
            terms: upper,
        },
        AffineMatrix {
            constant: DMatrix::identity(n, n) * beta,
            terms: lower,
        },
    ]
}

/// Minimize `t` subject to `M(P, s) ⪯ tI`. The search stops once `t`
/// reaches `target` or once the optimum provably exceeds `give_up`.
fn barrier_search(p: &Problem, s: f64, target: f64, give_up: f64, start: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = p.n();
    let dim = n + p.m();
    let basis = sym_basis(n);
    let k = basis.len();
    let mut terms: Vec<DMatrix<f64>> = lmi_terms(p, &basis).iter().map(|t| -t).collect();
    terms.push(DMatrix::identity(dim, dim));
    let mut constraints = vec![AffineMatrix {
        constant: -lmi_matrix(p, &DMatrix::zeros(n, n), s),
        terms,
    }];
    constraints.extend(storage_box(n, &basis, 1, storage_bound(p, start)));
    let mut y0: Vec<f64> = sym_coords(start);
    y0.push(lmi_margin(p, start, s) + 1.0);
    let mut objective = DVector::zeros(k + 1);
    objective[k] = 1.0;
    let out = lmi::minimize(&objective, &constraints, DVector::from_vec(y0), |y, lower| {
        y[k] <= target || lower > give_up
    })?;
    let found = from_coords(n, &out.rows(0, k).into_owned());
    (lmi_margin(p, &found, s) <= target.max(give_up)).then_some(found)
}

/// Storage matrix `P` with `λ_max(M(P, s)) ≤ min(1e−9, s/2)`.
///
/// The stabilizing Riccati solution for the weights `(Q − sI, R − sI)` is
/// tried first; a log-barrier search on `λ_max(M(P, s))` is the fallback.
pub fn find_storage_matrix(p: &Problem, s: f64) -> Result<DMatrix<f64>> {
    if !(s > 0.0) {
        return Err(Error::StorageInfeasible(s));
    }
    let tol = acceptance_tol(s);
    let (n, m) = (p.n(), p.m());
    let riccati = riccati::stabilizing_dare(
        p.a(),
        p.b(),
        &(p.q() - DMatrix::identity(n, n) * s),
        &(p.r() - DMatrix::identity(m, m) * s),
    )
    .map(|x| -x);
    if let Some(candidate) = &riccati {
        if lmi_margin(p, candidate, s) <= tol {
            return Ok(candidate.clone());
        }
    }
    let start = riccati.unwrap_or_else(|| DMatrix::zeros(n, n));
    barrier_search(p, s, tol, tol, &start).ok_or(Error::StorageInfeasible(s))
}

#[derive(Debug, Clone)]
pub struct DissipationRate {
    pub s: f64,
    pub storage: DMatrix<f64>,
}

/// Largest feasible rate by bisection over `[1e−12, λ_min(R)]`.
pub fn max_dissipation_rate(p: &Problem) -> Result<DissipationRate> {
    let mut lo = MIN_RATE;
    let mut best = find_storage_matrix(p, lo).map_err(|_| Error::NoFeasibleRate)?;
    let mut hi = sym_eig_range(p.r()).0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        match find_storage_matrix(p, mid) {
            Ok(storage) => {
                lo = mid;
                best = storage;
            }
            Err(_) => hi = mid,
        }
    }
    Ok(DissipationRate { s: lo, storage: best })
}

fn is_positive_definite(storage: &DMatrix<f64>) -> bool {
    sym_eig_range(storage).0 > PD_RTOL * (1.0 + storage.norm())
}

/// Maximize `λ_min(P)` subject to `M(P, s) ≺ 0`, starting from a strictly
/// feasible `P`; stops as soon as `P` is clearly positive definite.
///
/// Boxes close to the start are tried first so that the barrier centre does
/// not inflate `P`; the wide box is the fallback.
fn positive_definite_at(p: &Problem, s: f64, start: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let size = 1.0 + start.norm();
    [2.0 * size, 10.0 * size, storage_bound(p, start)]
        .into_iter()
        .find_map(|beta| positive_definite_in_box(p, s, start, beta))
}

fn positive_definite_in_box(p: &Problem, s: f64, start: &DMatrix<f64>, beta: f64) -> Option<DMatrix<f64>> {
    let n = p.n();
    let dim = n + p.m();
    let basis = sym_basis(n);
    let k = basis.len();
    let mut lmi: Vec<DMatrix<f64>> = lmi_terms(p, &basis).iter().map(|t| -t).collect();
    lmi.push(DMatrix::zeros(dim, dim));
    let mut floor: Vec<DMatrix<f64>> = basis.clone();
    floor.push(-DMatrix::identity(n, n));
    let mut constraints = vec![
        AffineMatrix {
            constant: -lmi_matrix(p, &DMatrix::zeros(n, n), s),
            terms: lmi,
        },
        AffineMatrix {
            constant: DMatrix::zeros(n, n),
            terms: floor,
        },
    ];
    constraints.extend(storage_box(n, &basis, 1, beta));
    let mut y0 = sym_coords(start);
    y0.push(sym_eig_range(start).0 - 1.0);
    let mut objective = DVector::zeros(k + 1);
    objective[k] = -1.0;
    let target = |y: &DVector<f64>| PD_RTOL * 10.0 * (1.0 + y.rows(0, k).norm());
    let out = lmi::minimize(&objective, &constraints, DVector::from_vec(y0), |y, lower| {
        y[k] >= target(y) || -lower < target(y)
    })?;
    let found = from_coords(n, &out.rows(0, k).into_owned());
    (is_positive_definite(&found) && lmi_margin(p, &found, s) <= 0.0).then_some(found)
}

/// How [`certify`] picks the dissipation rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateChoice {
    /// Half of the bisected maximum, so that `M(P, s) ⪯ 0` holds with margin.
    Auto,
    Fixed(f64),
}

/// Rate and storage matrix ready for a certificate.
///
/// When `(A, C)` is detectable the matrix is made positive definite, halving
/// the rate if needed.
pub fn storage_for_rate(p: &Problem, choice: RateChoice) -> Result<(f64, DMatrix<f64>)> {
    let (mut s, storage) = match choice {
        RateChoice::Auto => {
            // storage from 3/4 of the supremum keeps a strict margin at s*/2
            // without the blow-up of P near the supremum
            let rate = max_dissipation_rate(p)?;
            let storage = find_storage_matrix(p, 0.75 * rate.s).unwrap_or(rate.storage);
            (rate.s / 2.0, storage)
        }
        RateChoice::Fixed(s) => {
            let mut storage = find_storage_matrix(p, 2.0 * s).or_else(|_| find_storage_matrix(p, s))?;
            if lmi_margin(p, &storage, s) > 0.0 {
                if let Some(strict) = barrier_search(p, s, f64::NEG_INFINITY, 0.0, &storage) {
                    storage = strict;
                }
            }
            (s, storage)
        }
    };
    if is_positive_definite(&storage) || !is_detectable(p.a(), p.c()) {
        return Ok((s, storage));
    }
    let halvings = if choice == RateChoice::Auto { PD_HALVINGS } else { 0 };
    for _ in 0..=halvings {
        if lmi_margin(p, &storage, s) < 0.0 {
            if let Some(pd) = positive_definite_at(p, s, &storage) {
                return Ok((s, pd));
            }
        }
        s /= 2.0;
    }
    let s = match choice {
        RateChoice::Auto => max_dissipation_rate(p)?.s / 2.0,
        RateChoice::Fixed(s) => s,
    };
    Ok((s, storage))
}

/// Storage function `V(x) = xᵀPx + ⟨w, x⟩` with its verification data.
#[derive(Debug, Clone, Serialize)]
pub struct StorageCertificate {
    #[serde(rename = "P")]
    pub storage: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub s: f64,
    /// `λ_max(M(P, s))`.
    pub lmi_margin: f64,
    pub p_positive_definite: bool,
    /// Lower bound of `V` on `X`; `None` stands for `−∞`.
    pub lower_bound_on_x: Option<f64>,
    pub x_e: Vec<f64>,
    pub u_e: Vec<f64>,
    pub steady_cost: f64,
    pub mu: f64,
    pub nu: Vec<f64>,
}

impl StorageCertificate {
    pub fn storage_matrix(&self) -> DMatrix<f64> {
        let n = self.storage.len();
        DMatrix::from_fn(n, n, |i, j| self.storage[i][j])
    }

    pub fn w_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let storage = self.storage_matrix();
        (x.transpose() * storage * x)[(0, 0)] + self.w_vec().dot(x)
    }
}

/// Assemble `V` from a steady-state certificate and a feasible `(P, s)`.
pub fn build_storage(p: &Problem, cert: &SteadyStateCertificate, storage: &DMatrix<f64>, s: f64) -> StorageCertificate {
    let storage = symmetrize(storage);
    let x_e = cert.x_vec();
    let w = -cert.lambda_vec() - &storage * &x_e * 2.0;
    let (lambda_min, _) = sym_eig_range(&storage);
    let positive = is_positive_definite(&storage);
    let lower_bound_on_x = if positive {
        let inv = storage.clone().cholesky().map(|c| c.inverse());
        inv.map(|inv| -0.25 * (w.transpose() * inv * &w)[(0, 0)])
    } else {
        p.set()
            .state_radius()
            .map(|r| lambda_min.min(0.0) * r * r - w.norm() * r)
    };
    StorageCertificate {
        storage: (0..storage.nrows())
            .map(|i| storage.row(i).iter().copied().collect())
            .collect(),
        w: w.as_slice().to_vec(),
        s,
        lmi_margin: lmi_margin(p, &storage, s),
        p_positive_definite: positive,
        lower_bound_on_x,
        x_e: cert.x_e.clone(),
        u_e: cert.u_e.clone(),
        steady_cost: cert.optimal_value,
        mu: cert.mu,
        nu: cert.nu.clone(),
    }
}

/// Steady state, KKT multipliers and storage function in one call.
pub fn certify(p: &Problem, choice: RateChoice) -> Result<(SteadyStateCertificate, StorageCertificate)> {
    let cert = certified_steady_state(p)?;
    let (s, storage) = storage_for_rate(p, choice)?;
    let sc = build_storage(p, &cert, &storage, s);
    Ok((cert, sc))
}
