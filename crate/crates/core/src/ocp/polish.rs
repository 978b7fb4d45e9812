//! Active-set polishing of a nearly converged ADMM iterate.
//!
//! The pieces active at the consensus point become equalities on the stacked
//! controls (cone surfaces are linearized, then re-linearized at the new
//! point) and the equality-constrained QP is solved on the null space of the
//! active rows. The result is returned only if it is admissible and its
//! multipliers satisfy the sign conditions, so a returned trajectory is a KKT
//! point of the convex problem.

use nalgebra::{DMatrix, DVector};

use super::condense::condense;
use crate::linalg;
use crate::model::{is_admissible_with, vertex_directions, Block, Piece, Problem, Trajectory};

const ACTIVE_TOL: f64 = 1e-7;
const RELINEARIZATIONS: usize = 6;
const STATIONARITY_TOL: f64 = 1e-8;

enum Active {
    /// `aᵀw = b` coming from one or two inequalities.
    Affine {
        normal: DVector<f64>,
        value: f64,
        sign: Sign,
    },
    Vertex {
        axis: usize,
        radial: Vec<usize>,
    },
    Surface {
        axis: usize,
        radial: Vec<usize>,
    },
}

/// Admissible sign of the multiplier of one row.
#[derive(Clone, Copy, PartialEq)]
enum Sign {
    NonNeg,
    NonPos,
    Free,
    /// First row of a cone vertex block, followed by `usize` radial rows.
    Vertex(usize),
    /// Radial row inside a vertex block.
    Skip,
}

struct Row {
    normal: DVector<f64>,
    value: f64,
    sign: Sign,
}

fn unit(dim: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(dim);
    e[i] = 1.0;
    e
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= ACTIVE_TOL * (1.0 + b.abs())
}

fn bound(w: &DVector<f64>, coord: usize, lower: f64, upper: f64) -> Option<Active> {
    let (at_lower, at_upper) = (near(w[coord], lower), near(w[coord], upper));
    let sign = match (at_lower, at_upper) {
        (true, true) => Sign::Free,
        (false, true) => Sign::NonNeg,
        (true, false) => Sign::NonPos,
        (false, false) => return None,
    };
    Some(Active::Affine {
        normal: unit(w.len(), coord),
        value: if at_upper { upper } else { lower },
        sign,
    })
}

fn active_pieces(pieces: &[Piece], w: &DVector<f64>, n: usize, vertex_tol: f64) -> Vec<Active> {
    let mut out = Vec::new();
    for piece in pieces {
        match piece {
            Piece::Box { block, lower, upper } => {
                let off = if *block == Block::State { 0 } else { n };
                out.extend((0..lower.len()).filter_map(|j| bound(w, off + j, lower[j], upper[j])));
            }
            Piece::Interval { coord, lower, upper } => out.extend(bound(w, *coord, *lower, *upper)),
            Piece::Halfspace { normal, offset } => {
                let a = DVector::from_column_slice(normal);
                if near(a.dot(w), *offset) {
                    out.push(Active::Affine {
                        normal: a,
                        value: *offset,
                        sign: Sign::NonNeg,
                    });
                }
            }
            Piece::SecondOrderCone { axis, radial } => {
                let r = radial.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                if vertex_tol > 0.0 && r <= vertex_tol && w[*axis] <= ACTIVE_TOL {
                    out.push(Active::Vertex {
                        axis: *axis,
                        radial: radial.clone(),
                    });
                } else if near(r, w[*axis]) {
                    out.push(Active::Surface {
                        axis: *axis,
                        radial: radial.clone(),
                    });
                }
            }
            Piece::FullSpace => {}
        }
    }
    out
}

/// Rows of one stage in stage coordinates, cone surfaces linearized at `w`.
fn stage_rows(active: &[Active], w: &DVector<f64>) -> Vec<Row> {
    let dim = w.len();
    let mut rows = Vec::new();
    for a in active {
        match a {
            Active::Affine { normal, value, sign } => rows.push(Row {
                normal: normal.clone(),
                value: *value,
                sign: *sign,
            }),
            Active::Vertex { axis, radial } => {
                rows.push(Row {
                    normal: unit(dim, *axis),
                    value: 0.0,
                    sign: Sign::Vertex(radial.len()),
                });
                rows.extend(radial.iter().map(|&i| Row {
                    normal: unit(dim, i),
                    value: 0.0,
                    sign: Sign::Skip,
                }));
            }
            Active::Surface { axis, radial } => {
                // t - r̂ᵀr = 0, the negated gradient of ‖r‖ - t
                let r = radial.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                let mut e = unit(dim, *axis);
                if r > 0.0 {
                    for &i in radial {
                        e[i] = -w[i] / r;
                    }
                }
                rows.push(Row {
                    normal: e,
                    value: 0.0,
                    sign: Sign::NonPos,
                });
            }
        }
    }
    rows
}

/// Try to replace the ADMM iterate by an admissible KKT point.
///
/// `consensus` holds the projected stage points `(x(i), u(i))`, `i = 0..=N`,
/// the last one carrying the dummy terminal control. Near-vertex cone points
/// are first pinned to the vertex, then treated as surface points.
pub(crate) fn polish(p: &Problem, x0: &DVector<f64>, consensus: &[DVector<f64>], tol: f64) -> Option<Trajectory> {
    polish_with(p, x0, consensus, tol, ACTIVE_TOL).or_else(|| polish_with(p, x0, consensus, tol, 0.0))
}

fn polish_with(
    p: &Problem,
    x0: &DVector<f64>,
    consensus: &[DVector<f64>],
    tol: f64,
    vertex_tol: f64,
) -> Option<Trajectory> {
    let horizon = consensus.len() - 1;
    let (n, m) = (p.n(), p.m());
    let set = p.set();
    let qp = condense(p, x0, horizon).ok()?;
    let dim = m * (horizon + 1);
    let active: Vec<Vec<Active>> = consensus
        .iter()
        .map(|w| active_pieces(set.pieces(), w, n, vertex_tol))
        .collect();

    // w(i) = L(i) ū + c(i), where ū also carries the dummy terminal control
    let maps: Vec<(DMatrix<f64>, DVector<f64>)> = (0..=horizon)
        .map(|i| {
            let mut l = DMatrix::zeros(n + m, dim);
            l.view_mut((0, 0), (n, m * horizon)).copy_from(&qp.gamma[i]);
            for j in 0..m {
                l[(n + j, m * i + j)] = 1.0;
            }
            let mut c = DVector::zeros(n + m);
            c.rows_mut(0, n).copy_from(&(&qp.phi[i] * x0));
            (l, c)
        })
        .collect();
    let global_rows = |stages: &[DVector<f64>]| -> Vec<Row> {
        let mut rows = Vec::new();
        for (i, act) in active.iter().enumerate() {
            let (l, c) = &maps[i];
            rows.extend(stage_rows(act, &stages[i]).into_iter().map(|r| Row {
                value: r.value - r.normal.dot(c),
                normal: l.transpose() * &r.normal,
                sign: r.sign,
            }));
        }
        rows
    };

    // the dummy control is pulled towards its consensus value
    let mut hessian = DMatrix::identity(dim, dim);
    hessian.view_mut((0, 0), (m * horizon, m * horizon)).copy_from(&(&qp.p3 * 2.0));
    let mut linear = DVector::zeros(dim);
    linear.rows_mut(0, m * horizon).copy_from(&(qp.linear() * 2.0));
    linear.rows_mut(m * horizon, m).copy_from(&(-consensus[horizon].rows(n, m)));

    let mut stages: Vec<DVector<f64>> = consensus.to_vec();
    for _ in 0..RELINEARIZATIONS {
        let solution = solve_equality_qp(&hessian, &linear, &global_rows(&stages))?;
        stages = maps.iter().map(|(l, c)| l * &solution + c).collect();
        if set.g_stacked(&stages[horizon]) > tol {
            continue;
        }
        let controls: Vec<DVector<f64>> = (0..horizon).map(|i| solution.rows(m * i, m).into_owned()).collect();
        let traj = Trajectory::rollout(p, x0, controls).ok()?;
        if !is_admissible_with(p, &traj, tol).admissible {
            continue;
        }
        // stationarity uses the true cost, in which the dummy control is free
        let mut gradient = DVector::zeros(dim);
        gradient
            .rows_mut(0, m * horizon)
            .copy_from(&((&qp.p3 * solution.rows(0, m * horizon) + qp.linear()) * 2.0));
        return has_multipliers(&gradient, &global_rows(&stages)).then_some(traj);
    }
    None
}

/// `min ½ ūᵀHū + hᵀū` subject to the rows, on the null space of the rows.
fn solve_equality_qp(hessian: &DMatrix<f64>, linear: &DVector<f64>, rows: &[Row]) -> Option<DVector<f64>> {
    let dim = linear.len();
    if rows.is_empty() {
        return hessian.clone().cholesky().map(|c| c.solve(&(-linear)));
    }
    let mut e = DMatrix::zeros(rows.len(), dim);
    let mut f = DVector::zeros(rows.len());
    for (k, row) in rows.iter().enumerate() {
        e.set_row(k, &row.normal.transpose());
        f[k] = row.value;
    }
    let (range, null, _) = linalg::row_and_null_space(&e, 1e-10);
    let particular = &range * linalg::lstsq(&(&e * &range), &f);
    if (&e * &particular - &f).amax() > 1e-9 * (1.0 + f.amax()) {
        return None;
    }
    if null.ncols() == 0 {
        return Some(particular);
    }
    let reduced = linalg::symmetrize(&(null.transpose() * hessian * &null));
    let rhs = -(null.transpose() * (hessian * &particular + linear));
    let step = reduced.cholesky()?.solve(&rhs);
    Some(particular + null * step)
}

/// Whether `gradient + Σ λ_k a_k = 0` has a solution with admissible signs.
///
/// The least-squares multipliers are tried first; when those fail, a
/// non-negative combination of the generators of each normal cone is searched
/// (cone vertices use an inscribed polytope).
fn has_multipliers(gradient: &DVector<f64>, rows: &[Row]) -> bool {
    let tol = STATIONARITY_TOL * (1.0 + gradient.amax());
    if rows.is_empty() {
        return gradient.amax() <= tol;
    }
    let mut e = DMatrix::zeros(gradient.len(), rows.len());
    for (k, row) in rows.iter().enumerate() {
        e.set_column(k, &row.normal);
    }
    let lambda = linalg::lstsq(&e, &(-gradient));
    if (gradient + &e * &lambda).amax() <= tol && signs_ok(&lambda, rows, STATIONARITY_TOL * (1.0 + lambda.amax())) {
        return true;
    }
    let mut generators = Vec::new();
    let mut k = 0;
    while k < rows.len() {
        let a = &rows[k].normal;
        match rows[k].sign {
            Sign::NonNeg => generators.push(a.clone()),
            Sign::NonPos => generators.push(-a),
            Sign::Free => {
                generators.push(a.clone());
                generators.push(-a);
            }
            Sign::Vertex(count) => {
                for d in vertex_directions(count) {
                    let mut g = -a;
                    for (j, dj) in d.iter().enumerate() {
                        g += &rows[k + 1 + j].normal * *dj;
                    }
                    generators.push(g);
                }
                k += count;
            }
            Sign::Skip => {}
        }
        k += 1;
    }
    let g = DMatrix::from_columns(&generators);
    let weights = linalg::nnls(&g, &(-gradient));
    (gradient + &g * weights).amax() <= tol
}

fn signs_ok(lambda: &DVector<f64>, rows: &[Row], tol: f64) -> bool {
    let mut k = 0;
    while k < rows.len() {
        match rows[k].sign {
            Sign::NonNeg if lambda[k] < -tol => return false,
            Sign::NonPos if lambda[k] > tol => return false,
            Sign::Vertex(count) => {
                let radial = lambda.rows(k + 1, count).norm();
                if lambda[k] > -radial + tol {
                    return false;
                }
                k += count;
            }
            _ => {}
        }
        k += 1;
    }
    true
}
