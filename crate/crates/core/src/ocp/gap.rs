//! Least distance between the roll-outs from `x0` and `S^{N+1}`.
//!
//! Minimises `f(v) = ½ Σ dist(w(i), S)²` over the controls `v = (u(0), …, u(N))`
//! with restarted FISTA. `f` is convex with a Lipschitz gradient, so this
//! converges where alternating projections crawl (nearly tangent sets).

use nalgebra::DVector;

use crate::error::Result;
use crate::model::Problem;

const POWER_STEPS: usize = 60;

/// Outcome of [`least_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum GapVerdict {
    /// Some roll-out comes within the threshold of `S^{N+1}`.
    Reached,
    /// Every roll-out stays farther than the threshold; `gap` is the best
    /// distance found.
    Separated { gap: f64 },
    Undecided,
}

struct Rollout<'a> {
    problem: &'a Problem,
    x0: &'a DVector<f64>,
    horizon: usize,
}

impl Rollout<'_> {
    fn stages(&self, v: &[DVector<f64>], with_x0: bool) -> Vec<DVector<f64>> {
        let p = self.problem;
        let mut x = if with_x0 { self.x0.clone() } else { DVector::zeros(p.n()) };
        let mut out = Vec::with_capacity(self.horizon + 1);
        for (i, u) in v.iter().enumerate() {
            out.push(p.set().stack(&x, u));
            if i < self.horizon {
                x = p.a() * &x + p.b() * u;
            }
        }
        out
    }

    /// Transpose of the linear part of [`Rollout::stages`].
    fn adjoint(&self, r: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let p = self.problem;
        let set = p.set();
        let mut costate = DVector::zeros(p.n());
        let mut out = vec![DVector::zeros(p.m()); self.horizon + 1];
        for i in (0..=self.horizon).rev() {
            let (rx, ru) = set.split(&r[i]);
            out[i] = if i < self.horizon { ru + p.b().transpose() * &costate } else { ru };
            costate = rx + p.a().transpose() * &costate;
        }
        out
    }

    fn residual(&self, v: &[DVector<f64>]) -> Result<(f64, Vec<DVector<f64>>)> {
        let set = self.problem.set();
        let mut value = 0.0;
        let mut r = Vec::with_capacity(v.len());
        for w in self.stages(v, true) {
            let d = &w - set.project_stacked(&w)?;
            value += 0.5 * d.norm_squared();
            r.push(d);
        }
        Ok((value, r))
    }

    fn lipschitz(&self) -> f64 {
        let m = self.problem.m();
        let mut v: Vec<DVector<f64>> = (0..=self.horizon).map(|_| DVector::from_element(m, 1.0)).collect();
        let mut estimate = 1.0_f64;
        for _ in 0..POWER_STEPS {
            let length = norm(&v);
            if length == 0.0 {
                break;
            }
            v.iter_mut().for_each(|u| *u /= length);
            v = self.adjoint(&self.stages(&v, false));
            estimate = norm(&v);
        }
        // the power iterate underestimates the top eigenvalue
        1.1 * estimate.max(1.0)
    }
}

fn norm(v: &[DVector<f64>]) -> f64 {
    v.iter().map(|u| u.norm_squared()).sum::<f64>().sqrt()
}

fn axpy(a: &[DVector<f64>], s: f64, b: &[DVector<f64>]) -> Vec<DVector<f64>> {
    a.iter().zip(b).map(|(x, y)| x + y * s).collect()
}

/// Decide whether the roll-outs from `x0` reach `S^{N+1}` within `threshold`.
///
/// `Separated` needs the convexity lower bound `f(v) − ‖∇f(v)‖·D` to stay
/// above `½ threshold²`, with `D = 10 (1 + ‖v‖)` standing in for the unknown
/// distance to a minimiser.
pub(crate) fn least_gap(
    problem: &Problem,
    x0: &DVector<f64>,
    horizon: usize,
    threshold: f64,
    max_iterations: usize,
) -> Result<GapVerdict> {
    let rollout = Rollout { problem, x0, horizon };
    let step = 1.0 / rollout.lipschitz();
    let target = 0.5 * threshold * threshold;
    let mut v = vec![DVector::zeros(problem.m()); horizon + 1];
    let mut y = v.clone();
    let mut momentum = 1.0_f64;
    let mut best = f64::INFINITY;
    for _ in 0..max_iterations {
        let (value, r) = rollout.residual(&y)?;
        let grad = rollout.adjoint(&r);
        if value <= target {
            return Ok(GapVerdict::Reached);
        }
        best = best.min(value);
        let radius = 10.0 * (1.0 + norm(&y));
        if value - norm(&grad) * radius > target {
            return Ok(GapVerdict::Separated {
                gap: (2.0 * value).sqrt(),
            });
        }
        let next = axpy(&y, -step, &grad);
        let restart = grad.iter().zip(&next).zip(&v).map(|((g, n), o)| g.dot(&(n - o))).sum::<f64>() > 0.0;
        if restart {
            momentum = 1.0;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let diff: Vec<_> = next.iter().zip(&v).map(|(n, o)| n - o).collect();
        y = axpy(&next, (momentum - 1.0) / next_momentum, &diff);
        v = next;
        momentum = next_momentum;
    }
    if best <= target {
        return Ok(GapVerdict::Reached);
    }
    Ok(GapVerdict::Undecided)
}
