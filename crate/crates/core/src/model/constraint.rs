//! Structured convex constraint sets over the stacked vector `(x, u)`.
//!
//! Every set is a finite intersection of primitive pieces. The constraint
//! function is `g(x, u) = max_k g_k(x, u)` where each piece carries its
//! canonical function:
//!
//! | piece      | g_k                                   |
//! |------------|---------------------------------------|
//! | box        | `max_i max(w_i - hi_i, lo_i - w_i)`   |
//! | interval   | `max(w_k - hi, lo - w_k)`             |
//! | halfspace  | `aᵀw - b`                             |
//! | soc cone   | `‖w[radial]‖₂ - w[axis]`              |
//! | full space | `-1`                                  |

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for the Dykstra fixed point.
pub const PROJECTION_TOL: f64 = 1e-10;
pub const MAX_DYKSTRA_SWEEPS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    State,
    Control,
}

/// One primitive convex piece. Indices refer to the stacked vector `(x, u)`,
/// except for [`Piece::Box`] which addresses a whole block.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Box {
        block: Block,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Interval {
        coord: usize,
        lower: f64,
        upper: f64,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    SecondOrderCone {
        axis: usize,
        radial: Vec<usize>,
    },
    FullSpace,
}

impl Piece {
    /// `‖w_block‖_∞ ≤ radius`.
    pub fn norm_box(block: Block, dim: usize, radius: f64) -> Self {
        Piece::Box {
            block,
            lower: vec![-radius; dim],
            upper: vec![radius; dim],
        }
    }

    fn block_offset(block: Block, n: usize) -> usize {
        match block {
            Block::State => 0,
            Block::Control => n,
        }
    }

    /// Stacked coordinates this piece depends on.
    pub fn support(&self, n: usize, m: usize) -> Vec<usize> {
        match self {
            Piece::Box { block, lower, .. } => {
                let off = Self::block_offset(*block, n);
                (off..off + lower.len()).collect()
            }
            Piece::Interval { coord, .. } => vec![*coord],
            Piece::Halfspace { normal, .. } => (0..n + m).filter(|&i| normal[i] != 0.0).collect(),
            Piece::SecondOrderCone { axis, radial } => {
                let mut s = radial.clone();
                s.push(*axis);
                s.sort_unstable();
                s
            }
            Piece::FullSpace => Vec::new(),
        }
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        let dim = n + m;
        let bad = |msg: String| Err(Error::InvalidPiece(msg));
        match self {
            Piece::Box {
                block,
                lower,
                upper,
            } => {
                let want = match block {
                    Block::State => n,
                    Block::Control => m,
                };
                if lower.len() != want || upper.len() != want {
                    return bad(format!(
                        "box on {block:?} needs {want} bounds, got {}/{}",
                        lower.len(),
                        upper.len()
                    ));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
                    return bad("box lower bound exceeds upper bound".into());
                }
            }
            Piece::Interval {
                coord,
                lower,
                upper,
            } => {
                if *coord >= dim {
                    return bad(format!("interval coordinate {coord} out of range 0..{dim}"));
                }
                if lower > upper || lower.is_nan() || upper.is_nan() {
                    return bad("interval lower bound exceeds upper bound".into());
                }
            }
            Piece::Halfspace { normal, offset } => {
                if normal.len() != dim {
                    return bad(format!("halfspace normal has length {}, expected {dim}", normal.len()));
                }
                if normal.iter().all(|&a| a == 0.0) || !offset.is_finite() {
                    return bad("halfspace needs a non-zero normal and finite offset".into());
                }
            }
            Piece::SecondOrderCone { axis, radial } => {
                if *axis >= dim || radial.iter().any(|&i| i >= dim) {
                    return bad("cone index out of range".into());
                }
                if radial.is_empty() || radial.contains(axis) {
                    return bad("cone needs a non-empty radial part distinct from the axis".into());
                }
                let mut sorted = radial.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != radial.len() {
                    return bad("cone radial indices must be distinct".into());
                }
            }
            Piece::FullSpace => {}
        }
        Ok(())
    }

    /// Canonical piece function.
    pub fn value(&self, w: &DVector<f64>, n: usize) -> f64 {
        self.value_and_atom(w, n).0
    }

    /// Piece value together with a subgradient of the piece at `w`.
    ///
    /// Box and interval pieces are maxima of affine atoms; the first atom (by
    /// coordinate, upper side before lower side) attaining the max is used.
    /// At the cone vertex the gradient `(0, …, -1, …, 0)` is returned.
    pub fn value_and_atom(&self, w: &DVector<f64>, n: usize) -> (f64, DVector<f64>) {
        let dim = w.len();
        let mut grad = DVector::zeros(dim);
        match self {
            Piece::Box {
                block,
                lower,
                upper,
            } => {
                let off = Self::block_offset(*block, n);
                let mut best = f64::NEG_INFINITY;
                let mut arg = None;
                for i in 0..lower.len() {
                    let up = w[off + i] - upper[i];
                    if up > best {
                        best = up;
                        arg = Some((off + i, 1.0));
                    }
                    let lo = lower[i] - w[off + i];
                    if lo > best {
                        best = lo;
                        arg = Some((off + i, -1.0));
                    }
                }
                match arg {
                    Some((j, sgn)) => {
                        grad[j] = sgn;
                        (best, grad)
                    }
                    None => (-1.0, grad),
                }
            }
            Piece::Interval {
                coord,
                lower,
                upper,
            } => {
                let up = w[*coord] - upper;
                let lo = lower - w[*coord];
                if up >= lo {
                    if up.is_finite() {
                        grad[*coord] = 1.0;
                        (up, grad)
                    } else {
                        (-1.0, grad)
                    }
                } else {
                    grad[*coord] = -1.0;
                    (lo, grad)
                }
            }
            Piece::Halfspace { normal, offset } => {
                let a = DVector::from_column_slice(normal);
                let val = a.dot(w) - offset;
                (val, a)
            }
            Piece::SecondOrderCone { axis, radial } => {
                let r = radial.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                grad[*axis] = -1.0;
                if r > 0.0 {
                    for &i in radial {
                        grad[i] = w[i] / r;
                    }
                }
                (r - w[*axis], grad)
            }
            Piece::FullSpace => (-1.0, grad),
        }
    }

    /// Exact Euclidean projection onto the piece.
    pub fn project(&self, w: &DVector<f64>, n: usize) -> DVector<f64> {
        let mut out = w.clone();
        match self {
            Piece::Box {
                block,
                lower,
                upper,
            } => {
                let off = Self::block_offset(*block, n);
                for i in 0..lower.len() {
                    out[off + i] = out[off + i].clamp(lower[i], upper[i]);
                }
            }
            Piece::Interval {
                coord,
                lower,
                upper,
            } => {
                out[*coord] = out[*coord].clamp(*lower, *upper);
            }
            Piece::Halfspace { normal, offset } => {
                let a = DVector::from_column_slice(normal);
                let excess = a.dot(w) - offset;
                if excess > 0.0 {
                    out -= a * (excess / normal.iter().map(|x| x * x).sum::<f64>());
                }
            }
            Piece::SecondOrderCone { axis, radial } => {
                let t = w[*axis];
                let r = radial.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                if r <= t {
                    // inside
                } else if r <= -t {
                    out[*axis] = 0.0;
                    for &i in radial {
                        out[i] = 0.0;
                    }
                } else {
                    let alpha = 0.5 * (t + r);
                    out[*axis] = alpha;
                    for &i in radial {
                        out[i] = alpha * w[i] / r;
                    }
                }
            }
            Piece::FullSpace => {}
        }
        out
    }
}

/// Dykstra's alternating projections onto an intersection of convex sets.
///
/// Stops when a full sweep moves the iterate and all correction terms by
/// less than `tol`; errors with the last residual after `max_sweeps`.
pub fn dykstra<F>(start: &DVector<f64>, projectors: &[F], tol: f64, max_sweeps: usize) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k = projectors.len();
    let mut x = start.clone();
    if k == 0 {
        return Ok(x);
    }
    if k == 1 {
        return Ok(projectors[0](&x));
    }
    let mut corrections = vec![DVector::zeros(x.len()); k];
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        let x_prev = x.clone();
        let mut change = 0.0;
        for (proj, corr) in projectors.iter().zip(corrections.iter_mut()) {
            let y = &x + &*corr;
            let next = proj(&y);
            let new_corr = &y - &next;
            change += (&new_corr - &*corr).norm_squared();
            *corr = new_corr;
            x = next;
        }
        residual = ((&x - &x_prev).norm_squared() + change).sqrt();
        if residual <= tol {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_sweeps,
        residual,
    })
}

/// Unit vectors used to sample the cone vertex subdifferential: 32 angles in
/// the plane, coordinate directions otherwise.
pub(crate) fn vertex_directions(k: usize) -> Vec<Vec<f64>> {
    if k == 2 {
        return (0..32)
            .map(|j| {
                let (s, c) = (j as f64 * std::f64::consts::PI / 16.0).sin_cos();
                vec![c, s]
            })
            .collect();
    }
    let mut out = Vec::new();
    for i in 0..k {
        for sgn in [1.0, -1.0] {
            let mut d = vec![0.0; k];
            d[i] = sgn;
            out.push(d);
        }
    }
    out
}

/// Closed convex set `S ⊂ ℝⁿ × ℝᵐ` given as an intersection of pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    n: usize,
    m: usize,
    pieces: Vec<Piece>,
}

/// Location of the max-attaining piece returned with a subgradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgradient {
    pub value: f64,
    pub piece: Option<usize>,
    pub vector: DVector<f64>,
}

impl ConstraintSet {
    pub fn new(n: usize, m: usize, pieces: Vec<Piece>) -> Result<Self> {
        for p in &pieces {
            p.validate(n, m)?;
        }
        Ok(Self { n, m, pieces })
    }

    pub fn full(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            pieces: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    fn active_pieces(&self) -> impl Iterator<Item = (usize, &Piece)> {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| !matches!(p, Piece::FullSpace))
    }

    /// True when no piece couples state and control coordinates.
    pub fn is_product(&self) -> bool {
        let n = self.n;
        self.active_pieces().all(|(_, p)| {
            let s = p.support(n, self.m);
            s.iter().all(|&i| i < n) || s.iter().all(|&i| i >= n)
        })
    }

    fn is_state_piece(&self, p: &Piece) -> bool {
        let s = p.support(self.n, self.m);
        !s.is_empty() && s.iter().all(|&i| i < self.n)
    }

    pub fn stack(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        crate::linalg::concat(x, u)
    }

    /// `g` at the stacked point `w = (x, u)`.
    pub fn g_stacked(&self, w: &DVector<f64>) -> f64 {
        self.raw_max(w)
    }

    fn raw_max(&self, w: &DVector<f64>) -> f64 {
        let mut any = false;
        let mut best = f64::NEG_INFINITY;
        for (_, p) in self.active_pieces() {
            any = true;
            best = best.max(p.value(w, self.n));
        }
        if any {
            best
        } else {
            -1.0
        }
    }

    pub fn evaluate_g(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.raw_max(&self.stack(x, u))
    }

    pub fn contains(&self, x: &DVector<f64>, u: &DVector<f64>, tol: f64) -> bool {
        self.evaluate_g(x, u) <= tol
    }

    /// A subgradient of `g` at `w`, taken from the lowest-index piece attaining
    /// the max (ties within `1e-12`).
    pub fn subgradient_stacked(&self, w: &DVector<f64>) -> Subgradient {
        let g = self.raw_max(w);
        for (i, p) in self.active_pieces() {
            let (val, grad) = p.value_and_atom(w, self.n);
            if val >= g - 1e-12 {
                return Subgradient {
                    value: g,
                    piece: Some(i),
                    vector: grad,
                };
            }
        }
        Subgradient {
            value: g,
            piece: None,
            vector: DVector::zeros(w.len()),
        }
    }

    pub fn subgradient_g(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.subgradient_stacked(&self.stack(x, u)).vector
    }

    /// All affine/smooth atoms whose value is within `tol` of zero, with their
    /// gradients. Used to assemble multipliers at corners of the set.
    pub fn active_atoms(&self, w: &DVector<f64>, tol: f64) -> Vec<(usize, DVector<f64>)> {
        let dim = self.n + self.m;
        let mut atoms = Vec::new();
        for (i, p) in self.active_pieces() {
            match p {
                Piece::Box {
                    block,
                    lower,
                    upper,
                } => {
                    let off = Piece::block_offset(*block, self.n);
                    for j in 0..lower.len() {
                        if (w[off + j] - upper[j]).abs() <= tol {
                            let mut e = DVector::zeros(dim);
                            e[off + j] = 1.0;
                            atoms.push((i, e));
                        }
                        if (lower[j] - w[off + j]).abs() <= tol {
                            let mut e = DVector::zeros(dim);
                            e[off + j] = -1.0;
                            atoms.push((i, e));
                        }
                    }
                }
                Piece::Interval {
                    coord,
                    lower,
                    upper,
                } => {
                    if (w[*coord] - upper).abs() <= tol {
                        let mut e = DVector::zeros(dim);
                        e[*coord] = 1.0;
                        atoms.push((i, e));
                    }
                    if (lower - w[*coord]).abs() <= tol {
                        let mut e = DVector::zeros(dim);
                        e[*coord] = -1.0;
                        atoms.push((i, e));
                    }
                }
                Piece::SecondOrderCone { axis, radial } => {
                    let (val, grad) = p.value_and_atom(w, self.n);
                    if val.abs() > tol {
                        continue;
                    }
                    let at_vertex = w[*axis].abs() <= tol;
                    atoms.push((i, grad));
                    if at_vertex {
                        // inner polytope of the vertex subdifferential {(a, -1) : ‖a‖ ≤ 1}
                        for dir in vertex_directions(radial.len()) {
                            let mut e = DVector::zeros(dim);
                            e[*axis] = -1.0;
                            for (k, &r) in radial.iter().enumerate() {
                                e[r] = dir[k];
                            }
                            atoms.push((i, e));
                        }
                    }
                }
                _ => {
                    let (val, grad) = p.value_and_atom(w, self.n);
                    if val.abs() <= tol {
                        atoms.push((i, grad));
                    }
                }
            }
        }
        atoms
    }

    /// Euclidean projection of the stacked point onto `S`.
    pub fn project_stacked(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.project_stacked_with(w, PROJECTION_TOL, MAX_DYKSTRA_SWEEPS)
    }

    pub fn project_stacked_with(&self, w: &DVector<f64>, tol: f64, max_sweeps: usize) -> Result<DVector<f64>> {
        let pieces: Vec<&Piece> = self.active_pieces().map(|(_, p)| p).collect();
        let n = self.n;
        if self.disjoint_supports(&pieces) {
            let mut out = w.clone();
            for p in pieces {
                out = p.project(&out, n);
            }
            return Ok(out);
        }
        let projectors: Vec<_> = pieces
            .iter()
            .map(|p| move |v: &DVector<f64>| p.project(v, n))
            .collect();
        dykstra(w, &projectors, tol, max_sweeps)
    }

    fn disjoint_supports(&self, pieces: &[&Piece]) -> bool {
        let mut seen = vec![false; self.n + self.m];
        for p in pieces {
            for i in p.support(self.n, self.m) {
                if seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        true
    }

    pub fn project_stage(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let w = self.project_stacked(&self.stack(x, u))?;
        Ok(self.split(&w))
    }

    pub fn split(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (w.rows(0, self.n).into_owned(), w.rows(self.n, self.m).into_owned())
    }

    /// Value of the state-set function for product sets (max over pieces that
    /// touch only state coordinates). `None` when `S` couples `x` and `u`.
    pub fn state_g(&self, x: &DVector<f64>) -> Option<f64> {
        if !self.is_product() {
            return None;
        }
        let w = self.stack(x, &DVector::zeros(self.m));
        let mut best = -1.0f64;
        let mut any = false;
        for (_, p) in self.active_pieces() {
            if self.is_state_piece(p) {
                let v = p.value(&w, self.n);
                best = if any { best.max(v) } else { v };
                any = true;
            }
        }
        Some(best)
    }

    /// Membership in `X = {x : ∃u, (x, u) ∈ S}`.
    ///
    /// Product sets are decided structurally; otherwise the control slice
    /// `{u : (x, u) ∈ S}` is probed by alternating projections.
    pub fn contains_state(&self, x: &DVector<f64>, tol: f64) -> bool {
        if let Some(g) = self.state_g(x) {
            return g <= tol;
        }
        self.slice_gap(x, 5_000) <= tol
    }

    /// Distance reached by alternating projections between `S` and the slice
    /// `{(x, ·)}`; zero iff the slice meets `S` (in the limit).
    fn slice_gap(&self, x: &DVector<f64>, iterations: usize) -> f64 {
        let mut u = DVector::zeros(self.m);
        let mut gap = f64::INFINITY;
        for _ in 0..iterations {
            let Ok(w) = self.project_stacked(&self.stack(x, &u)) else {
                return f64::INFINITY;
            };
            let (px, pu) = self.split(&w);
            let new_gap = (&px - x).norm();
            if self.evaluate_g(x, &pu) <= 1e-12 {
                return 0.0;
            }
            if gap.is_finite() && (gap - new_gap).abs() <= 1e-15 * (1.0 + gap) {
                return new_gap;
            }
            gap = new_gap;
            u = pu;
        }
        gap
    }

    /// Euclidean projection onto `X`.
    pub fn project_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.is_product() {
            let n = self.n;
            let pieces: Vec<&Piece> = self
                .active_pieces()
                .map(|(_, p)| p)
                .filter(|p| self.is_state_piece(p))
                .collect();
            let w = self.stack(x, &DVector::zeros(self.m));
            let out = if self.disjoint_supports(&pieces) {
                pieces.iter().fold(w, |acc, p| p.project(&acc, n))
            } else {
                let projectors: Vec<_> = pieces
                    .iter()
                    .map(|p| move |v: &DVector<f64>| p.project(v, n))
                    .collect();
                dykstra(&w, &projectors, PROJECTION_TOL, MAX_DYKSTRA_SWEEPS)?
            };
            return Ok(out.rows(0, n).into_owned());
        }
        // ADMM on  min ½‖x' - x‖²  s.t. (x', u) ∈ S.
        let (n, m) = (self.n, self.m);
        let rho = 1.0;
        let mut zed = self.project_stacked(&self.stack(x, &DVector::zeros(m)))?;
        let mut dual = DVector::zeros(n + m);
        for _ in 0..50_000 {
            let target = &zed - &dual;
            let mut w = target.clone();
            for i in 0..n {
                w[i] = (x[i] + rho * target[i]) / (1.0 + rho);
            }
            let prev = zed.clone();
            zed = self.project_stacked(&(&w + &dual))?;
            dual += &w - &zed;
            if (&w - &zed).amax() <= 1e-12 && (&zed - &prev).amax() <= 1e-12 {
                break;
            }
        }
        Ok(zed.rows(0, n).into_owned())
    }

    /// Per-coordinate bounds of the stacked vector implied by box and interval pieces.
    pub fn coordinate_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); self.n + self.m];
        for (_, p) in self.active_pieces() {
            match p {
                Piece::Box {
                    block,
                    lower,
                    upper,
                } => {
                    let off = Piece::block_offset(*block, self.n);
                    for i in 0..lower.len() {
                        let b = &mut bounds[off + i];
                        b.0 = b.0.max(lower[i]);
                        b.1 = b.1.min(upper[i]);
                    }
                }
                Piece::Interval {
                    coord,
                    lower,
                    upper,
                } => {
                    let b = &mut bounds[*coord];
                    b.0 = b.0.max(*lower);
                    b.1 = b.1.min(*upper);
                }
                _ => {}
            }
        }
        bounds
    }

    /// Radius of a Euclidean ball containing `X`, when boxes bound every state coordinate.
    pub fn state_radius(&self) -> Option<f64> {
        let bounds = self.coordinate_bounds();
        let mut sq = 0.0;
        for &(lo, hi) in bounds.iter().take(self.n) {
            if !lo.is_finite() || !hi.is_finite() {
                return None;
            }
            sq += lo.abs().max(hi.abs()).powi(2);
        }
        Some(sq.sqrt())
    }
}
