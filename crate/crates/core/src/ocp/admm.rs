//! Consensus ADMM for the finite-horizon problem.
//!
//! The stage variables `w(i) = (x(i), u(i))`, `i = 0..=N`, carry a dummy
//! control at `i = N` so that `x(N) ∈ X` becomes `(x(N), u(N)) ∈ S`. The
//! dynamics-coupled quadratic block is solved by a Riccati recursion and the
//! set block by stage-wise projection onto `S`.

use nalgebra::DVector;
use serde::Serialize;

use super::gap::{least_gap, GapVerdict};
use super::lq::LqFactor;
use super::polish::polish;
use crate::error::{check_dim, Error, Result};
use crate::model::{is_admissible_with, ConstraintSet, Problem, Trajectory};

#[derive(Debug, Clone)]
pub struct OcpOptions {
    /// Initial penalty parameter.
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Membership tolerance the returned roll-out must meet.
    pub admissibility_tol: f64,
    pub max_iterations: usize,
    /// Initial guess for the controls; zero when absent.
    pub initial_controls: Option<Vec<DVector<f64>>>,
}

impl Default for OcpOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            admissibility_tol: crate::model::ADMISSIBILITY_TOL,
            max_iterations: 50_000,
            initial_controls: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub trajectory: Trajectory,
    pub stats: SolveStats,
}

const BALANCE_RATIO: f64 = 10.0;
const BALANCE_EVERY: usize = 25;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const POLISH_EVERY: usize = 200;
const POLISH_START: f64 = 1e-5;
const PROBE_SWEEPS: usize = 50;
const PROBE_MAX_CHUNKS: usize = 200;
const PROBE_STAGNATION: f64 = 1e-3;
const GAP_ITERATIONS: usize = 50_000;
const TIGHT_GAP: f64 = 1e-6;

pub fn solve_ocp(p: &Problem, x0: &DVector<f64>, horizon: usize) -> Result<Trajectory> {
    Ok(solve_ocp_with(p, x0, horizon, &OcpOptions::default())?.trajectory)
}

fn infeasible(x0: &DVector<f64>, horizon: usize) -> Error {
    Error::Infeasible {
        x0: x0.as_slice().to_vec(),
        horizon,
    }
}

fn project_all(set: &ConstraintSet, stages: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    stages.iter().map(|w| set.project_stacked(w)).collect()
}

fn max_norm(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Stage stacking of a Riccati solution; the dummy terminal control is given.
fn stack_stages(
    set: &ConstraintSet,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
    terminal_control: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = states
        .iter()
        .zip(controls)
        .map(|(x, u)| set.stack(x, u))
        .collect();
    out.push(set.stack(states.last().unwrap(), terminal_control));
    out
}

/// Euclidean projection of stage targets onto the dynamics-affine set.
struct AffineProjector<'a> {
    problem: &'a Problem,
    factor: LqFactor,
    x0: DVector<f64>,
}

impl<'a> AffineProjector<'a> {
    fn new(problem: &'a Problem, x0: &DVector<f64>, horizon: usize) -> Self {
        let (n, m) = (problem.n(), problem.m());
        let factor = LqFactor::new(
            problem.a(),
            problem.b(),
            &nalgebra::DMatrix::identity(n, n),
            &nalgebra::DMatrix::identity(m, m),
            &nalgebra::DMatrix::identity(n, n),
            horizon,
        );
        Self {
            problem,
            factor,
            x0: x0.clone(),
        }
    }

    fn project(&self, targets: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let set = self.problem.set();
        let horizon = targets.len() - 1;
        let mut ql = Vec::with_capacity(horizon);
        let mut rl = Vec::with_capacity(horizon);
        for t in &targets[..horizon] {
            let (x, u) = set.split(t);
            ql.push(-x);
            rl.push(-u);
        }
        let (xn, un) = set.split(&targets[horizon]);
        let (states, controls) = self.factor.solve(&self.x0, &ql, &rl, &(-xn));
        stack_stages(set, &states, &controls, &un)
    }
}

/// Feasibility decision from Dykstra's alternating projections between the
/// dynamics-affine set and `S^{N+1}`.
///
/// The gap is sampled every [`PROBE_SWEEPS`] sweeps. Feasible once it drops
/// below `threshold`; infeasible once it stagnates above it. `None` when
/// neither happens within the sweep budget.
fn probe_feasible(
    affine: &AffineProjector,
    set: &ConstraintSet,
    start: Vec<DVector<f64>>,
    threshold: f64,
) -> Result<Option<bool>> {
    let mut point = start;
    let mut corrections = vec![DVector::zeros(point[0].len()); point.len()];
    let mut previous = f64::INFINITY;
    for chunk in 0..PROBE_MAX_CHUNKS {
        let mut gap = f64::INFINITY;
        for _ in 0..PROBE_SWEEPS {
            let on_affine = affine.project(&point);
            let shifted: Vec<DVector<f64>> = on_affine.iter().zip(&corrections).map(|(a, c)| a + c).collect();
            let on_set = project_all(set, &shifted)?;
            for ((c, s), p) in corrections.iter_mut().zip(&shifted).zip(&on_set) {
                *c = s - p;
            }
            gap = on_affine
                .iter()
                .zip(&on_set)
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                .sqrt();
            point = on_set;
        }
        if gap <= threshold {
            return Ok(Some(true));
        }
        if chunk > 0 && previous - gap <= PROBE_STAGNATION * gap {
            return Ok(Some(false));
        }
        previous = gap;
    }
    Ok(None)
}

/// Solve the constrained finite-horizon problem from `x0`.
pub fn solve_ocp_with(p: &Problem, x0: &DVector<f64>, horizon: usize, opts: &OcpOptions) -> Result<OcpSolution> {
    check_dim("initial state", p.n(), x0.len())?;
    let set = p.set();
    let (n, m) = (p.n(), p.m());
    if horizon == 0 {
        if !set.contains_state(x0, opts.admissibility_tol) {
            return Err(infeasible(x0, 0));
        }
        let trajectory = Trajectory::rollout(p, x0, Vec::new())?;
        return Ok(OcpSolution {
            trajectory,
            stats: SolveStats {
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                rho: opts.rho,
            },
        });
    }

    let initial_controls = match &opts.initial_controls {
        Some(us) => {
            if us.len() != horizon {
                return Err(Error::Dimension {
                    context: "initial controls",
                    expected: horizon,
                    got: us.len(),
                });
            }
            us.clone()
        }
        None => vec![DVector::zeros(m); horizon],
    };
    let start = Trajectory::rollout(p, x0, initial_controls)?;
    let start_stages = stack_stages(set, &start.states, &start.controls, &DVector::zeros(m));

    let affine = AffineProjector::new(p, x0, horizon);
    // the verdict must not depend on the caller's warm start
    let zero_start = if opts.initial_controls.is_some() {
        let free = Trajectory::rollout(p, x0, vec![DVector::zeros(m); horizon])?;
        stack_stages(set, &free.states, &free.controls, &DVector::zeros(m))
    } else {
        start_stages.clone()
    };
    let projected = project_all(set, &zero_start)?;
    let threshold = 1e-3 * (1.0 + x0.norm());
    let feasible = match probe_feasible(&affine, set, projected, threshold)? {
        Some(verdict) => verdict,
        // an undecided verdict is left to the solver
        None => !matches!(
            least_gap(p, x0, horizon, threshold, GAP_ITERATIONS)?,
            GapVerdict::Separated { .. }
        ),
    };
    if !feasible {
        return Err(infeasible(x0, horizon));
    }

    let mut rho = opts.rho;
    let weights = |rho: f64| {
        let eye_n = nalgebra::DMatrix::<f64>::identity(n, n);
        let eye_m = nalgebra::DMatrix::<f64>::identity(m, m);
        LqFactor::new(
            p.a(),
            p.b(),
            &(p.q() * 2.0 + &eye_n * rho),
            &(p.r() * 2.0 + &eye_m * rho),
            &(eye_n * rho),
            horizon,
        )
    };
    let mut splitting = Splitting {
        problem: p,
        x0,
        factor: weights(rho),
        rho,
        stage_dim: n + m,
        stages: horizon + 1,
    };
    let consensus = project_all(set, &start_stages)?;
    let mut point = splitting.pack(&consensus, &vec![DVector::zeros(n + m); horizon + 1]);
    let mut accel = crate::anderson::Anderson::new(ANDERSON_MEMORY);
    let mut pending: Option<Step> = None;
    let mut primal_res = f64::INFINITY;
    let mut dual_res = f64::INFINITY;
    let mut settled = false;
    let mut polish_countdown = 0;

    for it in 0..opts.max_iterations {
        let out = match pending.take() {
            Some(out) => out,
            None => splitting.step(&point)?,
        };
        primal_res = out.primal;
        dual_res = out.dual;
        let (_, dual) = splitting.unpack(&out.next);
        let primal_scale = out.scale.max(1.0);
        let dual_scale = (splitting.rho * max_norm(&dual)).max(1.0);
        let converged = primal_res <= opts.abs_tol
            && dual_res <= opts.abs_tol
            && primal_res <= opts.rel_tol * primal_scale
            && dual_res <= opts.rel_tol * dual_scale;
        if converged {
            settled = true;
            let traj = Trajectory::from_parts(p, out.states.clone(), out.controls.clone());
            if is_admissible_with(p, &traj, opts.admissibility_tol).admissible {
                return Ok(OcpSolution {
                    trajectory: traj,
                    stats: SolveStats {
                        iterations: it + 1,
                        primal_residual: primal_res,
                        dual_residual: dual_res,
                        rho: splitting.rho,
                    },
                });
            }
            // the roll-out is not admissible yet: keep shrinking the residuals
        }
        if polish_countdown == 0 && primal_res <= POLISH_START && dual_res <= POLISH_START {
            let (consensus, _) = splitting.unpack(&out.next);
            if let Some(trajectory) = polish(p, x0, &consensus, opts.admissibility_tol) {
                return Ok(OcpSolution {
                    trajectory,
                    stats: SolveStats {
                        iterations: it + 1,
                        primal_residual: primal_res,
                        dual_residual: dual_res,
                        rho: splitting.rho,
                    },
                });
            }
            polish_countdown = POLISH_EVERY;
        }
        polish_countdown = polish_countdown.saturating_sub(1);
        if !settled && it % BALANCE_EVERY == 0 && it > 0 {
            let new_rho = if primal_res > BALANCE_RATIO * dual_res {
                (rho * 2.0).min(RHO_MAX)
            } else if dual_res > BALANCE_RATIO * primal_res {
                (rho / 2.0).max(RHO_MIN)
            } else {
                rho
            };
            if new_rho != rho {
                let (consensus, mut dual) = splitting.unpack(&out.next);
                for y in dual.iter_mut() {
                    *y *= rho / new_rho;
                }
                rho = new_rho;
                splitting.rho = rho;
                splitting.factor = weights(rho);
                point = splitting.pack(&consensus, &dual);
                accel.clear();
                continue;
            }
        }
        let residual = &out.next - &point;
        match accel.extrapolate(&point, &residual) {
            Some(candidate) => {
                let trial = splitting.step(&candidate)?;
                if (&trial.next - &candidate).norm() < residual.norm() {
                    point = candidate;
                    pending = Some(trial);
                } else {
                    point = out.next;
                }
            }
            None => point = out.next,
        }
    }
    // a stalled primal residual may be a small but genuine infeasibility
    let tight = TIGHT_GAP * (1.0 + x0.norm());
    if let GapVerdict::Separated { .. } = least_gap(p, x0, horizon, tight, GAP_ITERATIONS)? {
        return Err(infeasible(x0, horizon));
    }
    Err(Error::NonConverged {
        iterations: opts.max_iterations,
        primal: primal_res,
        dual: dual_res,
    })
}

const ANDERSON_MEMORY: usize = 8;

/// One ADMM sweep viewed as a fixed-point map on `(ζ, y)`.
struct Splitting<'a> {
    problem: &'a Problem,
    x0: &'a DVector<f64>,
    factor: LqFactor,
    rho: f64,
    stage_dim: usize,
    stages: usize,
}

struct Step {
    next: DVector<f64>,
    states: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
    primal: f64,
    dual: f64,
    scale: f64,
}

impl Splitting<'_> {
    fn pack(&self, consensus: &[DVector<f64>], dual: &[DVector<f64>]) -> DVector<f64> {
        let d = self.stage_dim;
        let mut out = DVector::zeros(2 * d * self.stages);
        for (i, (z, y)) in consensus.iter().zip(dual).enumerate() {
            out.rows_mut(2 * d * i, d).copy_from(z);
            out.rows_mut(2 * d * i + d, d).copy_from(y);
        }
        out
    }

    fn unpack(&self, v: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let d = self.stage_dim;
        (0..self.stages)
            .map(|i| (v.rows(2 * d * i, d).into_owned(), v.rows(2 * d * i + d, d).into_owned()))
            .unzip()
    }

    fn step(&self, point: &DVector<f64>) -> Result<Step> {
        let p = self.problem;
        let set = p.set();
        let horizon = self.stages - 1;
        let rho = self.rho;
        let (consensus, dual) = self.unpack(point);
        let zl = p.z() * 2.0;
        let vl = p.v() * 2.0;
        let mut ql = Vec::with_capacity(horizon);
        let mut rl = Vec::with_capacity(horizon);
        for i in 0..horizon {
            let (a, b) = set.split(&(&consensus[i] - &dual[i]));
            ql.push(&zl - a * rho);
            rl.push(&vl - b * rho);
        }
        let (an, bn) = set.split(&(&consensus[horizon] - &dual[horizon]));
        let (states, controls) = self.factor.solve(self.x0, &ql, &rl, &(-an * rho));
        let stages = stack_stages(set, &states, &controls, &bn);
        let shifted: Vec<DVector<f64>> = stages.iter().zip(&dual).map(|(w, y)| w + y).collect();
        let projected = project_all(set, &shifted)?;
        let primal = max_diff(&stages, &projected);
        let dual_res = rho * max_diff(&projected, &consensus);
        let next_dual: Vec<DVector<f64>> = shifted.iter().zip(&projected).map(|(s, z)| s - z).collect();
        let scale = max_norm(&stages).max(max_norm(&projected));
        Ok(Step {
            next: self.pack(&projected, &next_dual),
            states,
            controls,
            primal,
            dual: dual_res,
            scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_admissible;
    use crate::scenarios;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn rotation_example_keeps_zero_control() {
        let p = scenarios::example_rotation_box().problem;
        let x0 = v(&[0.6, -0.7]);
        let t = solve_ocp(&p, &x0, 20).unwrap();
        assert!(is_admissible(&p, &t).admissible);
        for (i, (x, u)) in t.states.iter().zip(&t.controls).enumerate() {
            assert!(u.amax() < 1e-7);
            assert!((x.norm() - (-0.1 * i as f64).exp() * x0.norm()).abs() < 1e-7);
        }
        assert!(t.total_cost.abs() < 1e-12);
    }

    #[test]
    fn rotation_example_corner_is_infeasible() {
        let p = scenarios::example_rotation_box().problem;
        for horizon in [1, 3, 10] {
            assert!(matches!(
                solve_ocp(&p, &v(&[1.0, 1.0]), horizon),
                Err(Error::Infeasible { .. })
            ));
        }
    }

    #[test]
    fn cone_two_steps_from_vertex() {
        let p = scenarios::example_cone();
        let t = solve_ocp(&p, &v(&[0.0, 0.0, 0.0]), 2).unwrap();
        assert!((t.total_cost + 1.0).abs() < 1e-6, "{}", t.total_cost);
        assert!(t.controls[0][0].abs() < 1e-4 && (t.controls[1][0] + 1.0).abs() < 1e-4);
        assert!(is_admissible(&p, &t).admissible);
        assert!((t.states[2][2] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn unconstrained_origin_stays_put() {
        let p = crate::model::Problem::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[1.1, 0.2, 0.0, 0.7]),
            nalgebra::DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            nalgebra::DMatrix::identity(2, 2),
            nalgebra::DMatrix::identity(1, 1),
            DVector::zeros(2),
            DVector::zeros(1),
            0.0,
            ConstraintSet::full(2, 1),
        )
        .unwrap();
        let t = solve_ocp(&p, &DVector::zeros(2), 6).unwrap();
        assert!(t.total_cost.abs() < 1e-12);
        assert!(t.states.iter().all(|x| x.amax() < 1e-10));
    }
}
