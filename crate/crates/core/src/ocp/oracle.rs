//! Reference solver for tests: a log-barrier interior-point method on the
//! condensed problem, independent of the splitting solver.

use nalgebra::{DMatrix, DVector};

use super::condense::{condense, CondensedQp};
use crate::error::{Error, Result};
use crate::model::{is_admissible_with, Piece, Problem, Trajectory};

const DROP_TOL: f64 = 1e-13;
const DUMMY_WEIGHT: f64 = 1e-10;
const GRID_POINTS: usize = 201;

/// `aᵀy ≤ b`
struct Linear {
    a: DVector<f64>,
    b: f64,
}

/// `‖My + m‖ ≤ cᵀy + e`
struct Cone {
    mat: DMatrix<f64>,
    shift: DVector<f64>,
    c: DVector<f64>,
    e: f64,
}

struct Atoms {
    linear: Vec<Linear>,
    cones: Vec<Cone>,
}

impl Atoms {
    fn count(&self) -> f64 {
        self.linear.len() as f64 + 2.0 * self.cones.len() as f64
    }

    /// Largest constraint value at `y` (≤ 0 means feasible).
    fn violation(&self, y: &DVector<f64>) -> f64 {
        let lin = self.linear.iter().map(|l| l.a.dot(y) - l.b);
        let soc = self
            .cones
            .iter()
            .map(|c| (&c.mat * y + &c.shift).norm() - c.c.dot(y) - c.e);
        lin.chain(soc).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Affine map `w = L y + l` of the stacked stage vector in the decision variable.
fn stage_atoms(atoms: &mut Atoms, piece: &Piece, map: &DMatrix<f64>, offset: &DVector<f64>, n: usize) -> Result<()> {
    let dim = offset.len();
    let unit = |i: usize, s: f64| {
        let mut e = DVector::zeros(dim);
        e[i] = s;
        e
    };
    // rows `rowᵀw ≤ bound` on the stacked stage vector
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    match piece {
        Piece::Box { block, lower, upper } => {
            let off = if matches!(block, crate::model::Block::State) { 0 } else { n };
            for j in 0..lower.len() {
                if upper[j].is_finite() {
                    rows.push((unit(off + j, 1.0), upper[j]));
                }
                if lower[j].is_finite() {
                    rows.push((unit(off + j, -1.0), -lower[j]));
                }
            }
        }
        Piece::Interval { coord, lower, upper } => {
            if upper.is_finite() {
                rows.push((unit(*coord, 1.0), *upper));
            }
            if lower.is_finite() {
                rows.push((unit(*coord, -1.0), -*lower));
            }
        }
        Piece::Halfspace { normal, offset: b } => rows.push((DVector::from_column_slice(normal), *b)),
        Piece::SecondOrderCone { axis, radial } => {
            let mut sel = DMatrix::zeros(radial.len(), dim);
            for (k, &r) in radial.iter().enumerate() {
                sel[(k, r)] = 1.0;
            }
            let mat = &sel * map;
            let shift = &sel * offset;
            if mat.amax() <= DROP_TOL {
                // ‖m‖ ≤ cᵀy + e is linear in y
                rows.push((unit(*axis, -1.0), -shift.norm()));
            } else {
                atoms.cones.push(Cone {
                    mat,
                    shift,
                    c: map.row(*axis).transpose(),
                    e: offset[*axis],
                });
            }
        }
        Piece::FullSpace => {}
    }
    for (row, bound) in rows {
        let a = map.transpose() * &row;
        let b = bound - row.dot(offset);
        if a.amax() <= DROP_TOL {
            if b < -1e-9 {
                return Err(Error::InfeasibleSteadyState);
            }
            continue;
        }
        atoms.linear.push(Linear { a, b });
    }
    Ok(())
}

fn build_atoms(p: &Problem, qp: &CondensedQp, x0: &DVector<f64>, dummy: bool) -> Result<(Atoms, usize)> {
    let (n, m) = (p.n(), p.m());
    let horizon = qp.horizon;
    let dim = m * horizon + if dummy { m } else { 0 };
    let set = p.set();
    let mut atoms = Atoms {
        linear: Vec::new(),
        cones: Vec::new(),
    };
    for i in 0..=horizon {
        let mut map = DMatrix::zeros(n + m, dim);
        map.view_mut((0, 0), (n, m * horizon)).copy_from(&qp.gamma[i]);
        let terminal = i == horizon;
        if !terminal || dummy {
            map.view_mut((n, m * i), (m, m)).fill_with_identity();
        }
        let mut offset = DVector::zeros(n + m);
        offset.rows_mut(0, n).copy_from(&(&qp.phi[i] * x0));
        for piece in set.pieces() {
            let touches_control = piece.support(n, m).iter().any(|&j| j >= n);
            if terminal && !dummy && touches_control {
                continue;
            }
            stage_atoms(&mut atoms, piece, &map, &offset, n).map_err(|_| Error::Infeasible {
                x0: x0.as_slice().to_vec(),
                horizon,
            })?;
        }
    }
    Ok((atoms, dim))
}

fn barrier_value(atoms: &Atoms, y: &DVector<f64>) -> Option<f64> {
    let mut val = 0.0;
    for l in &atoms.linear {
        let slack = l.b - l.a.dot(y);
        if slack <= 0.0 {
            return None;
        }
        val -= slack.ln();
    }
    for c in &atoms.cones {
        let s = c.c.dot(y) + c.e;
        let f = s * s - (&c.mat * y + &c.shift).norm_squared();
        if s <= 0.0 || f <= 0.0 {
            return None;
        }
        val -= f.ln();
    }
    Some(val)
}

/// Gradient and Hessian of the log barrier; `None` outside the domain.
fn barrier_derivatives(atoms: &Atoms, y: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let d = y.len();
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for l in &atoms.linear {
        let slack = l.b - l.a.dot(y);
        if slack <= 0.0 {
            return None;
        }
        grad += &l.a / slack;
        hess.ger(1.0 / (slack * slack), &l.a, &l.a, 1.0);
    }
    for c in &atoms.cones {
        let s = c.c.dot(y) + c.e;
        let r = &c.mat * y + &c.shift;
        let f = s * s - r.norm_squared();
        if s <= 0.0 || f <= 0.0 {
            return None;
        }
        let df = &c.c * (2.0 * s) - c.mat.transpose() * &r * 2.0;
        grad -= &df / f;
        hess.ger(1.0 / (f * f), &df, &df, 1.0);
        hess.ger(-2.0 / f, &c.c, &c.c, 1.0);
        hess += c.mat.transpose() * &c.mat * (2.0 / f);
    }
    Some((grad, hess))
}

/// Damped Newton on `t·(yᵀHy + 2fᵀy) + barrier(y)`.
fn centering(atoms: &Atoms, h: &DMatrix<f64>, f: &DVector<f64>, t: f64, mut y: DVector<f64>) -> DVector<f64> {
    let objective = |y: &DVector<f64>| -> Option<f64> {
        barrier_value(atoms, y).map(|b| t * (y.dot(&(h * y)) + 2.0 * f.dot(y)) + b)
    };
    for _ in 0..200 {
        let Some((bg, bh)) = barrier_derivatives(atoms, &y) else {
            break;
        };
        let grad = (h * &y + f) * (2.0 * t) + bg;
        let hess = h * (2.0 * t) + bh;
        let step = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -crate::linalg::lstsq(&hess, &grad),
        };
        let decrement = -grad.dot(&step);
        if decrement / 2.0 <= 1e-14 {
            break;
        }
        let f0 = objective(&y).unwrap();
        let mut alpha = 1.0;
        loop {
            let cand = &y + &step * alpha;
            if let Some(fc) = objective(&cand) {
                if fc <= f0 - 0.25 * alpha * decrement {
                    y = cand;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-16 {
                return y;
            }
        }
    }
    y
}

/// Find a strictly feasible point by minimizing `σ` with every atom relaxed by `σ`.
fn phase_one(atoms: &Atoms, dim: usize) -> Option<DVector<f64>> {
    let y0 = DVector::zeros(dim);
    let start_sigma = atoms.violation(&y0);
    if start_sigma < 0.0 {
        return Some(y0);
    }
    // variables (y, σ); σ ≥ −1 keeps the problem bounded
    let lift = |a: &DVector<f64>, s: f64| {
        let mut out = DVector::zeros(dim + 1);
        out.rows_mut(0, dim).copy_from(a);
        out[dim] = s;
        out
    };
    let mut relaxed = Atoms {
        linear: atoms
            .linear
            .iter()
            .map(|l| Linear {
                a: lift(&l.a, -1.0),
                b: l.b,
            })
            .collect(),
        cones: atoms
            .cones
            .iter()
            .map(|c| {
                let mut mat = DMatrix::zeros(c.mat.nrows(), dim + 1);
                mat.view_mut((0, 0), (c.mat.nrows(), dim)).copy_from(&c.mat);
                Cone {
                    mat,
                    shift: c.shift.clone(),
                    c: lift(&c.c, 1.0),
                    e: c.e,
                }
            })
            .collect(),
    };
    relaxed.linear.push(Linear {
        a: lift(&DVector::zeros(dim), -1.0),
        b: 1.0,
    });
    let mut h = DMatrix::identity(dim + 1, dim + 1) * 1e-8;
    h[(dim, dim)] = 0.0;
    let f = lift(&DVector::zeros(dim), 0.5);
    let mut z = lift(&y0, start_sigma + 1.0);
    let mut t = 1.0;
    while t < 1e14 {
        z = centering(&relaxed, &h, &f, t, z);
        if z[dim] < 0.0 && atoms.violation(&z.rows(0, dim).into_owned()) < 0.0 {
            return Some(z.rows(0, dim).into_owned());
        }
        t *= 10.0;
    }
    None
}

fn interior_point(qp: &CondensedQp, atoms: &Atoms, dim: usize) -> Option<DVector<f64>> {
    let mut h = DMatrix::identity(dim, dim) * DUMMY_WEIGHT;
    let base = qp.p3.nrows();
    h.view_mut((0, 0), (base, base)).copy_from(&qp.p3);
    let mut f = DVector::zeros(dim);
    f.rows_mut(0, base).copy_from(&qp.linear());
    if atoms.linear.is_empty() && atoms.cones.is_empty() {
        return h.cholesky().map(|ch| -ch.solve(&f));
    }
    let mut y = phase_one(atoms, dim)?;
    let mut t = 1.0;
    loop {
        y = centering(atoms, &h, &f, t, y);
        let cost = y.dot(&(&h * &y)) + 2.0 * f.dot(&y) + qp.p1;
        if atoms.count() / t <= 1e-12 * (1.0 + cost.abs()) {
            return Some(y);
        }
        t *= 8.0;
    }
}

fn controls_of(y: &DVector<f64>, m: usize, horizon: usize) -> Vec<DVector<f64>> {
    (0..horizon).map(|i| y.rows(m * i, m).into_owned()).collect()
}

/// Dense grid search with local refinement for box-bounded controls and `mN ≤ 2`.
fn grid_search(p: &Problem, x0: &DVector<f64>, qp: &CondensedQp) -> Option<(DVector<f64>, f64)> {
    let (n, m) = (p.n(), p.m());
    let dim = m * qp.horizon;
    if dim == 0 || dim > 2 {
        return None;
    }
    let box_only = p
        .set()
        .pieces()
        .iter()
        .all(|pc| matches!(pc, Piece::Box { .. } | Piece::Interval { .. } | Piece::FullSpace));
    if !box_only {
        return None;
    }
    let bounds = p.set().coordinate_bounds();
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for i in 0..dim {
        let (l, h) = bounds[n + i % m];
        if !l.is_finite() || !h.is_finite() {
            return None;
        }
        lo.push(l);
        hi.push(h);
    }
    let feasible = |y: &DVector<f64>| {
        let t = Trajectory::rollout(p, x0, controls_of(y, m, qp.horizon)).ok()?;
        is_admissible_with(p, &t, 1e-12).admissible.then_some(t.total_cost)
    };
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let mut half: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();
    for _ in 0..8 {
        let axis = |k: usize, j: usize| {
            let v = center[k] - half[k] + 2.0 * half[k] * j as f64 / (GRID_POINTS - 1) as f64;
            v.clamp(lo[k], hi[k])
        };
        let count = if dim == 1 { 1 } else { GRID_POINTS };
        for a in 0..GRID_POINTS {
            for b in 0..count {
                let y = if dim == 1 {
                    DVector::from_element(1, axis(0, a))
                } else {
                    DVector::from_column_slice(&[axis(0, a), axis(1, b)])
                };
                if let Some(c) = feasible(&y) {
                    if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                        best = Some((y, c));
                    }
                }
            }
        }
        let (y, _) = best.as_ref()?;
        center = y.iter().copied().collect();
        half.iter_mut().for_each(|h| *h *= 0.1);
    }
    best
}

/// High-accuracy reference solution of the finite-horizon problem.
pub fn brute_oracle(p: &Problem, x0: &DVector<f64>, horizon: usize) -> Result<Trajectory> {
    let infeasible = || Error::Infeasible {
        x0: x0.as_slice().to_vec(),
        horizon,
    };
    if horizon == 0 {
        if !p.set().contains_state(x0, 1e-10) {
            return Err(infeasible());
        }
        return Trajectory::rollout(p, x0, Vec::new());
    }
    let qp = condense(p, x0, horizon)?;
    let dummy = !p.set().is_product();
    let (atoms, dim) = build_atoms(p, &qp, x0, dummy)?;
    let m = p.m();
    let ipm = interior_point(&qp, &atoms, dim).map(|y| {
        let controls = controls_of(&y, m, horizon);
        Trajectory::rollout(p, x0, controls)
    });
    let ipm = match ipm {
        Some(t) => Some(t?),
        None => None,
    };
    let grid = grid_search(p, x0, &qp).map(|(y, _)| Trajectory::rollout(p, x0, controls_of(&y, m, horizon)));
    let grid = match grid {
        Some(t) => Some(t?),
        None => None,
    };
    match (ipm, grid) {
        (Some(a), Some(b)) => Ok(if b.total_cost < a.total_cost { b } else { a }),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(infeasible()),
    }
}
