//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use turnpike_core::model::{Block, ConstraintSet, Piece, Problem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gaussian(rng))
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gaussian(rng))
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    turnpike_core::linalg::eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `A` rescaled so that its spectral radius equals `radius`.
pub fn scaled_dynamics(rng: &mut impl Rng, n: usize, radius: f64) -> DMatrix<f64> {
    loop {
        let a = random_matrix(rng, n, n);
        let rho = spectral_radius(&a);
        if rho > 1e-3 {
            return a * (radius / rho);
        }
    }
}

pub fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let l = random_matrix(rng, n, rank);
    let q = &l * l.transpose();
    (&q + q.transpose()) * 0.5
}

pub fn random_pd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    random_psd(rng, n, n) + DMatrix::identity(n, n) * floor
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetKind {
    Box,
    Cone,
}

/// Box or cone constraints; cones need `n ≥ 2` and fall back to boxes otherwise.
pub fn random_set(rng: &mut impl Rng, n: usize, m: usize, kind: SetKind) -> ConstraintSet {
    let control_radius = rng.random_range(0.5..2.0);
    let mut pieces = vec![Piece::norm_box(Block::Control, m, control_radius)];
    if kind == SetKind::Cone && n >= 2 {
        pieces.push(Piece::SecondOrderCone {
            axis: n - 1,
            radial: (0..n - 1).collect(),
        });
    } else {
        pieces.push(Piece::norm_box(Block::State, n, rng.random_range(1.0..3.0)));
    }
    ConstraintSet::new(n, m, pieces).unwrap()
}

pub fn random_problem(rng: &mut impl Rng, n: usize, m: usize, kind: SetKind) -> Problem {
    let radius = rng.random_range(0.5..1.3);
    let a = scaled_dynamics(rng, n, radius);
    let b = random_matrix(rng, n, m);
    let rank = rng.random_range(1..=n);
    let q = random_psd(rng, n, rank);
    let r = random_pd(rng, m, 0.2);
    let z = random_vector(rng, n) * 0.5;
    let v = random_vector(rng, m) * 0.5;
    Problem::new(a, b, q, r, z, v, 0.0, random_set(rng, n, m, kind)).unwrap()
}

/// Random problem with `n, m ≤ 3` whose pair `(A, C)` is detectable.
pub fn random_detectable_problem(rng: &mut impl Rng) -> Problem {
    loop {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let kind = if rng.random_bool(0.5) { SetKind::Box } else { SetKind::Cone };
        let p = random_problem(rng, n, m, kind);
        if turnpike_core::system_analysis::is_detectable(p.a(), p.c()) {
            return p;
        }
    }
}

/// Uniform point of the state set drawn by rejection from `[-scale, scale]ⁿ`.
pub fn random_state_in_x(rng: &mut impl Rng, p: &Problem, scale: f64) -> DVector<f64> {
    loop {
        let x = DVector::from_fn(p.n(), |_, _| rng.random_range(-scale..scale));
        if p.set().contains_state(&x, 0.0) {
            return x;
        }
    }
}

/// Random `(problem, x0, horizon)` with `n, m ≤ 3` and `N ≤ 8`.
pub fn random_ocp_case(rng: &mut impl Rng) -> (Problem, DVector<f64>, usize) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let kind = if rng.random_bool(0.5) { SetKind::Box } else { SetKind::Cone };
    let p = random_problem(rng, n, m, kind);
    let x0 = random_state_in_x(rng, &p, 2.0);
    let horizon = rng.random_range(1..=8);
    (p, x0, horizon)
}

/// `A = S diag(γ) S⁻¹` with some eigenvalues drawn from {1, −1} and some
/// eigenvectors hidden from `C`.
pub fn planted_problem(seed: u64) -> Problem {
    let mut r = rng(seed);
    let n = r.random_range(1..=4);
    let m = r.random_range(1..=4);
    let gammas: Vec<f64> = (0..n)
        .map(|_| match r.random_range(0..4) {
            0 => 1.0,
            1 => -1.0,
            _ => r.random_range(-1.5..1.5),
        })
        .collect();
    let basis = loop {
        let s = random_matrix(&mut r, n, n);
        if s.clone().svd(false, false).singular_values.min() > 0.2 {
            break s;
        }
    };
    let a = &basis * DMatrix::from_diagonal(&DVector::from_vec(gammas)) * basis.clone().try_inverse().unwrap();
    let hidden: Vec<usize> = (0..n).filter(|_| r.random_bool(0.4)).collect();
    let mut c = random_matrix(&mut r, n, n);
    if !hidden.is_empty() {
        let h = DMatrix::from_columns(&hidden.iter().map(|&k| basis.column(k)).collect::<Vec<_>>());
        let projector = &h * h.clone().pseudo_inverse(1e-12).unwrap();
        c = &c * (DMatrix::identity(n, n) - projector);
    }
    let q = c.transpose() * &c;
    let b = random_matrix(&mut r, n, m);
    let weight = random_pd(&mut r, m, 0.2);
    let q = (&q + q.transpose()) * 0.5;
    Problem::new(
        a,
        b,
        q,
        weight,
        DVector::zeros(n),
        DVector::zeros(m),
        0.0,
        ConstraintSet::full(n, m),
    )
    .unwrap()
}

/// PBH test at γ = 1: `[A − I; C]` loses rank.
pub fn unobservable_at_one(p: &Problem) -> bool {
    let n = p.n();
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&(p.a() - DMatrix::identity(n, n)));
    stacked.view_mut((n, 0), (n, n)).copy_from(p.c());
    let sv = stacked.svd(false, false).singular_values;
    sv.min() <= 1e-7 * sv.max().max(1.0)
}
