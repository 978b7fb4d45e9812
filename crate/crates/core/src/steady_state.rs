//! Constrained optimal steady states and their KKT certificates.
//!
//! Steady pairs `(x, u)` with `Ax + Bu = x` are parametrized as `w = Vθ`
//! with `V` an orthonormal basis of `ker [A − I  B]`. The reduced problem
//! `min ℓ(Vθ)` over `{θ : Vθ ∈ S}` is split as `Vθ = ζ ∈ S` and solved by
//! ADMM, which only needs projections onto `S`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::anderson::Anderson;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{dykstra, Piece, Problem};
use crate::system_analysis::{has_unit_modulus_unobservable, kernel_basis_steady, steady_cost_positive_definite};

/// `|g| ≤ ACTIVE_TOL` selects the active-constraint branch of the certificate.
pub const ACTIVE_TOL: f64 = 1e-8;
pub const KKT_TOL: f64 = 1e-6;
const JOINT_SOLVE_TOL: f64 = 1e-7;
const MU_SIGN_TOL: f64 = 1e-10;
const SUBSPACE_PROJECTION_TOL: f64 = 1e-13;
const ANDERSON_MEMORY: usize = 8;
const BALANCE_EVERY: usize = 25;
const BALANCE_RATIO: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Target for the larger of the primal and dual residuals, relative to `1 + ‖w‖∞`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 42,
            tol: 1e-12,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub value: f64,
    /// Final ADMM residual of the best restart.
    pub residual: f64,
    /// Largest distance between the best point and any restart's result.
    pub restart_spread: f64,
    pub iterations: usize,
}

impl SteadyState {
    pub fn x_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn u_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u)
    }
}

/// Reduced problem on the kernel parametrization.
struct Reduced<'a> {
    problem: &'a Problem,
    basis: DMatrix<f64>,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
}

impl<'a> Reduced<'a> {
    fn new(problem: &'a Problem) -> Self {
        let basis = kernel_basis_steady(problem.a(), problem.b());
        let hessian = linalg::symmetrize(&(basis.transpose() * problem.cost_hessian() * &basis));
        let linear = basis.transpose() * problem.cost_linear();
        Self {
            problem,
            basis,
            hessian,
            linear,
        }
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn lift(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.basis * theta
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let (x, u) = self.problem.set().split(&self.lift(theta));
        self.problem.stage_cost_unchecked(&x, &u)
    }

    /// Projection onto `{θ : Vθ ∈ S}` (exact up to Dykstra's tolerance since `V` is orthonormal).
    fn project(&self, theta: &DVector<f64>, max_sweeps: usize) -> Result<DVector<f64>> {
        let w = self.lift(theta);
        let n = self.problem.n();
        let pieces: Vec<&Piece> = self
            .problem
            .set()
            .pieces()
            .iter()
            .filter(|p| !matches!(p, Piece::FullSpace))
            .collect();
        if pieces.is_empty() {
            return Ok(theta.clone());
        }
        let basis = &self.basis;
        let mut projectors: Vec<Box<dyn Fn(&DVector<f64>) -> DVector<f64> + '_>> =
            vec![Box::new(move |v: &DVector<f64>| basis * (basis.transpose() * v))];
        for p in pieces {
            projectors.push(Box::new(move |v: &DVector<f64>| p.project(v, n)));
        }
        let out = dykstra(&w, &projectors, SUBSPACE_PROJECTION_TOL, max_sweeps)?;
        Ok(self.basis.transpose() * out)
    }

    /// ADMM on `min ℓ(Vθ)` subject to `Vθ = ζ`, `ζ ∈ S`, with residual
    /// balancing and safeguarded Anderson acceleration.
    fn minimize(&self, start: &DVector<f64>, opts: &SteadyOptions) -> Result<(DVector<f64>, f64, usize)> {
        let set = self.problem.set();
        let d = self.basis.nrows();
        let mut rho = 1.0;
        let mut solver = self.inner_solver(rho);
        let zeta = set.project_stacked(&self.lift(start))?;
        let mut point = DVector::zeros(2 * d);
        point.rows_mut(0, d).copy_from(&zeta);
        let mut accel = Anderson::new(ANDERSON_MEMORY);
        let mut pending = None;
        let mut residual = f64::INFINITY;
        for it in 0..opts.max_iterations {
            let out = match pending.take() {
                Some(out) => out,
                None => self.admm_step(&point, rho, &solver)?,
            };
            residual = out.primal.max(out.dual);
            let scale = 1.0 + self.lift(&out.theta).amax();
            if residual <= opts.tol * scale {
                return Ok((out.theta, residual, it + 1));
            }
            if it % BALANCE_EVERY == 0 && it > 0 {
                let ratio = out.primal / out.dual.max(f64::MIN_POSITIVE);
                let factor = if ratio > BALANCE_RATIO {
                    2.0
                } else if ratio < 1.0 / BALANCE_RATIO {
                    0.5
                } else {
                    1.0
                };
                if factor != 1.0 {
                    let mut next = out.next.clone();
                    next.rows_mut(d, d).scale_mut(1.0 / factor);
                    rho *= factor;
                    solver = self.inner_solver(rho);
                    point = next;
                    accel.clear();
                    continue;
                }
            }
            let step = &out.next - &point;
            match accel.extrapolate(&point, &step) {
                Some(candidate) => {
                    let trial = self.admm_step(&candidate, rho, &solver)?;
                    if (&trial.next - &candidate).norm() < step.norm() {
                        point = candidate;
                        pending = Some(trial);
                    } else {
                        point = out.next;
                    }
                }
                None => point = out.next,
            }
        }
        Ok((self.basis.transpose() * point.rows(0, d), residual, opts.max_iterations))
    }

    fn inner_solver(&self, rho: f64) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
        let k = self.dim();
        (&self.hessian * 2.0 + DMatrix::identity(k, k) * rho)
            .cholesky()
            .expect("2H + ρI is positive definite")
    }

    fn admm_step(
        &self,
        point: &DVector<f64>,
        rho: f64,
        solver: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ) -> Result<AdmmStep> {
        let d = self.basis.nrows();
        let zeta = point.rows(0, d);
        let dual = point.rows(d, d);
        let rhs = self.basis.transpose() * (zeta - dual) * rho - &self.linear * 2.0;
        let theta = solver.solve(&rhs);
        let w = self.lift(&theta);
        let shifted = &w + dual;
        let projected = self.problem.set().project_stacked(&shifted)?;
        let mut next = DVector::zeros(2 * d);
        next.rows_mut(0, d).copy_from(&projected);
        next.rows_mut(d, d).copy_from(&(&shifted - &projected));
        Ok(AdmmStep {
            primal: (&w - &projected).amax(),
            dual: rho * (self.basis.transpose() * (&projected - zeta)).amax(),
            theta,
            next,
        })
    }
}

struct AdmmStep {
    next: DVector<f64>,
    theta: DVector<f64>,
    primal: f64,
    dual: f64,
}

fn check_hypothesis(p: &Problem) -> Result<()> {
    if has_unit_modulus_unobservable(p.a(), p.c()) {
        return Err(Error::HypothesisViolated(
            "(A, C) has an unobservable eigenvalue of unit modulus".into(),
        ));
    }
    Ok(())
}

/// Minimizer of `ℓ` over `{(x, u) ∈ S : Ax + Bu = x}`.
pub fn solve_steady_state(p: &Problem) -> Result<SteadyState> {
    solve_steady_state_with(p, &SteadyOptions::default())
}

pub fn solve_steady_state_with(p: &Problem, opts: &SteadyOptions) -> Result<SteadyState> {
    check_hypothesis(p)?;
    let reduced = Reduced::new(p);
    let set = p.set();
    if reduced.dim() == 0 {
        let (x, u) = (DVector::zeros(p.n()), DVector::zeros(p.m()));
        if !set.contains(&x, &u, ACTIVE_TOL) {
            return Err(Error::InfeasibleSteadyState);
        }
        return Ok(SteadyState {
            value: p.stage_cost_unchecked(&x, &u),
            x: x.as_slice().to_vec(),
            u: u.as_slice().to_vec(),
            residual: 0.0,
            restart_spread: 0.0,
            iterations: 0,
        });
    }
    // feasibility probe: project the origin onto ker ∩ S
    let probe = reduced
        .project(&DVector::zeros(reduced.dim()), 2_000)
        .map_err(|_| Error::InfeasibleSteadyState)?;
    if set.g_stacked(&reduced.lift(&probe)) > 1e-8 {
        return Err(Error::InfeasibleSteadyState);
    }

    let scale = 1.0 + unconstrained_theta(&reduced).map(|t| t.norm()).unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![probe];
    for _ in 1..opts.restarts.max(1) {
        starts.push(DVector::from_fn(reduced.dim(), |_, _| rng.random_range(-scale..=scale)));
    }
    let results: Vec<Result<(DVector<f64>, f64, usize)>> =
        starts.par_iter().map(|s| reduced.minimize(s, opts)).collect();
    let results: Vec<(DVector<f64>, f64, usize)> = results.into_iter().collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|r| reduced.objective(&r.0)).collect();
    let best = (0..results.len())
        .min_by(|&i, &j| {
            values[i]
                .partial_cmp(&values[j])
                .unwrap()
                .then_with(|| lexicographic(&results[i].0, &results[j].0))
        })
        .unwrap();
    let theta = &results[best].0;
    let spread = results.iter().map(|r| (&r.0 - theta).norm()).fold(0.0, f64::max);
    let (x, u) = set.split(&reduced.lift(theta));
    Ok(SteadyState {
        value: p.stage_cost_unchecked(&x, &u),
        x: x.as_slice().to_vec(),
        u: u.as_slice().to_vec(),
        residual: results[best].1,
        restart_spread: spread,
        iterations: results.iter().map(|r| r.2).max().unwrap_or(0),
    })
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn unconstrained_theta(reduced: &Reduced) -> Option<DVector<f64>> {
    reduced
        .hessian
        .clone()
        .cholesky()
        .map(|ch| -ch.solve(&reduced.linear))
}

/// Minimizer of `ℓ` over all steady pairs, ignoring `S`.
pub fn global_steady_state(p: &Problem) -> Result<(DVector<f64>, DVector<f64>)> {
    if !steady_cost_positive_definite(p) {
        return Err(Error::SingularReducedHessian);
    }
    let reduced = Reduced::new(p);
    if reduced.dim() == 0 {
        return Ok((DVector::zeros(p.n()), DVector::zeros(p.m())));
    }
    let theta = unconstrained_theta(&reduced).ok_or(Error::SingularReducedHessian)?;
    Ok(p.set().split(&reduced.lift(&theta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `‖∇ℓ + [A − I  B]ᵀλ + μν‖`.
    pub stationarity: f64,
    /// `‖Ax + Bu − x‖`.
    pub steadiness: f64,
    /// `|μ g(x, u)|`.
    pub complementarity: f64,
    /// `max(g(x, u), 0)`.
    pub feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.steadiness)
            .max(self.complementarity)
            .max(self.feasibility)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyStateCertificate {
    pub x_e: Vec<f64>,
    pub u_e: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub nu: Vec<f64>,
    pub g: f64,
    /// Whether the pair lies on the boundary of `S`.
    pub boundary: bool,
    /// Piece that supplied `ν`; `None` when several atoms were combined.
    pub nu_piece: Option<usize>,
    pub residuals: KktResiduals,
    pub optimal_value: f64,
    /// False when the best residual exceeds the KKT tolerance.
    pub kkt_ok: bool,
}

impl SteadyStateCertificate {
    pub fn x_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_e)
    }

    pub fn u_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u_e)
    }

    pub fn lambda_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambda)
    }

    pub fn nu_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.nu)
    }
}

fn residuals(p: &Problem, w: &DVector<f64>, lambda: &DVector<f64>, mu: f64, nu: &DVector<f64>) -> KktResiduals {
    let (x, u) = p.set().split(w);
    let grad = p.stage_cost_gradient(&x, &u);
    let g = p.set().g_stacked(w);
    let station = grad + p.steady_matrix().transpose() * lambda + nu * mu;
    KktResiduals {
        stationarity: station.norm(),
        steadiness: (p.steady_matrix() * w).norm(),
        complementarity: (mu * g).abs(),
        feasibility: g.max(0.0),
    }
}

/// Multipliers `(λ, μ, ν)` for the steady pair `(x_e, u_e)`.
///
/// Inactive constraints give `μ = 0` and a least-squares `λ`. Active
/// constraints first try the selected subgradient; if that leaves a
/// stationarity residual, all active atoms are combined by non-negative
/// least squares and `ν` is their normalized combination.
pub fn kkt_certificate(p: &Problem, x_e: &DVector<f64>, u_e: &DVector<f64>) -> Result<SteadyStateCertificate> {
    let set = p.set();
    let w = set.stack(x_e, u_e);
    let grad = p.stage_cost_gradient(x_e, u_e);
    let steady_t = p.steady_matrix().transpose();
    let sub = set.subgradient_stacked(&w);
    let g = sub.value;
    let solve_lambda = |rhs: &DVector<f64>| linalg::lstsq(&steady_t, &(-rhs));

    let (lambda, mu, nu, piece) = if g < -ACTIVE_TOL {
        (solve_lambda(&grad), 0.0, sub.vector.clone(), sub.piece)
    } else {
        // λ is eliminated by projecting onto ker [A − I  B] = range(G)^⊥.
        let basis = kernel_basis_steady(p.a(), p.b());
        let reduce = |v: &DVector<f64>| basis.transpose() * v;
        let rg = reduce(&grad);
        let rn = reduce(&sub.vector);
        let mu = if rn.norm_squared() > 1e-24 {
            (-rn.dot(&rg) / rn.norm_squared()).max(0.0)
        } else {
            0.0
        };
        let nu = sub.vector.clone();
        let lambda = solve_lambda(&(&grad + &nu * mu));
        let first = (lambda, mu, nu, sub.piece);
        if residuals(p, &w, &first.0, first.1, &first.2).stationarity <= JOINT_SOLVE_TOL {
            first
        } else {
            let atoms = set.active_atoms(&w, ACTIVE_TOL.max(g.abs()));
            if atoms.is_empty() {
                first
            } else {
                let mut cols = DMatrix::zeros(basis.ncols(), atoms.len());
                for (j, (_, a)) in atoms.iter().enumerate() {
                    cols.set_column(j, &reduce(a));
                }
                let weights = linalg::nnls(&cols, &(-&rg));
                let mu: f64 = weights.sum();
                if mu <= 0.0 {
                    first
                } else {
                    let mut nu = DVector::zeros(w.len());
                    for (wt, (_, a)) in weights.iter().zip(&atoms) {
                        nu += a * (*wt / mu);
                    }
                    let lambda = solve_lambda(&(&grad + &nu * mu));
                    let pieces: Vec<usize> = atoms
                        .iter()
                        .zip(weights.iter())
                        .filter(|(_, wt)| **wt > 0.0)
                        .map(|((i, _), _)| *i)
                        .collect();
                    let single = pieces.windows(2).all(|w| w[0] == w[1]);
                    let piece = if single { pieces.first().copied() } else { None };
                    let second = (lambda, mu, nu, piece);
                    let r1 = residuals(p, &w, &first.0, first.1, &first.2).max();
                    let r2 = residuals(p, &w, &second.0, second.1, &second.2).max();
                    if r2 < r1 {
                        second
                    } else {
                        first
                    }
                }
            }
        }
    };
    let res = residuals(p, &w, &lambda, mu, &nu);
    Ok(SteadyStateCertificate {
        x_e: x_e.as_slice().to_vec(),
        u_e: u_e.as_slice().to_vec(),
        lambda: lambda.as_slice().to_vec(),
        mu,
        nu: nu.as_slice().to_vec(),
        g,
        boundary: g.abs() <= ACTIVE_TOL,
        nu_piece: piece,
        residuals: res,
        optimal_value: p.stage_cost_unchecked(x_e, u_e),
        kkt_ok: res.max() <= KKT_TOL && mu >= -MU_SIGN_TOL,
    })
}

/// Steady state together with its certificate.
pub fn certified_steady_state(p: &Problem) -> Result<SteadyStateCertificate> {
    let ss = solve_steady_state(p)?;
    kkt_certificate(p, &ss.x_vec(), &ss.u_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    pub residuals: KktResiduals,
    pub mu_nonnegative: bool,
    pub passed: bool,
}

/// Recompute the residuals of a certificate from the problem data.
pub fn verify_kkt(cert: &SteadyStateCertificate, p: &Problem) -> KktReport {
    let w = p.set().stack(&cert.x_vec(), &cert.u_vec());
    let res = residuals(p, &w, &cert.lambda_vec(), cert.mu, &cert.nu_vec());
    let mu_nonnegative = cert.mu >= -MU_SIGN_TOL;
    KktReport {
        residuals: res,
        mu_nonnegative,
        passed: mu_nonnegative && res.max() <= KKT_TOL,
    }
}
