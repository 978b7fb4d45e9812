use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::StorageCertificate;
use crate::model::Problem;
use crate::Result;

pub const DEFAULT_SAMPLES: usize = 10_000;
const DISSIPATION_TOL: f64 = 1e-8;
const SUBGRADIENT_TOL: f64 = 1e-9;
/// Half-width of the sampling window around the steady pair on unbounded coordinates.
const SAMPLE_RADIUS: f64 = 5.0;
const BOUNDARY_SHARE: f64 = 0.25;
const REJECTION_TRIES: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `V(x⁺) − V(x) − ℓ(x, u) + ℓ(x_e, u_e) + s‖(x − x_e, u − u_e)‖²`.
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub subgradient_violations: usize,
    /// Largest `μ ⟨ν, (x − x_e, u − u_e)⟩`.
    pub worst_subgradient: f64,
    pub passed: bool,
}

fn sampling_window(p: &Problem, center: &DVector<f64>) -> Vec<(f64, f64)> {
    p.set()
        .coordinate_bounds()
        .iter()
        .zip(center.iter())
        .map(|(&(lo, hi), &c)| (lo.max(c - SAMPLE_RADIUS), hi.min(c + SAMPLE_RADIUS)))
        .collect()
}

fn draw(rng: &mut ChaCha8Rng, window: &[(f64, f64)], widen: f64) -> DVector<f64> {
    DVector::from_iterator(
        window.len(),
        window.iter().map(|&(lo, hi)| {
            let (lo, hi) = (lo - widen, hi + widen);
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        }),
    )
}

/// Interior points by rejection and boundary points as projections of
/// exterior draws, in a fixed order determined by `seed`.
fn sample_stages(p: &Problem, center: &DVector<f64>, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let set = p.set();
    let window = sampling_window(p, center);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boundary = (count as f64 * BOUNDARY_SHARE).round() as usize;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i < count - boundary {
            let hit = (0..REJECTION_TRIES)
                .map(|_| draw(&mut rng, &window, 0.0))
                .find(|w| set.g_stacked(w) <= 0.0);
            match hit {
                Some(w) => out.push(w),
                None => out.push(set.project_stacked(&draw(&mut rng, &window, 0.0))?),
            }
        } else {
            out.push(set.project_stacked(&draw(&mut rng, &window, 1.0))?);
        }
    }
    Ok(out)
}

/// Check the dissipation inequality with rate `s·r²` and the subgradient
/// inequality `μ⟨ν, w − w_e⟩ ≤ 0` on sampled points of `S`.
pub fn verify_strict_dissipativity(
    sc: &StorageCertificate,
    p: &Problem,
    n_samples: usize,
    seed: u64,
) -> Result<DissipationReport> {
    let set = p.set();
    let x_e = DVector::from_column_slice(&sc.x_e);
    let u_e = DVector::from_column_slice(&sc.u_e);
    let center = set.stack(&x_e, &u_e);
    let nu = DVector::from_column_slice(&sc.nu);
    let mut points = vec![center.clone()];
    points.extend(sample_stages(p, &center, n_samples, seed)?);
    let evaluate = |w: &DVector<f64>| {
        let (x, u) = set.split(w);
        let next = p.a() * &x + p.b() * &u;
        let d = w - &center;
        let margin = sc.value(&next) - sc.value(&x) - p.stage_cost_unchecked(&x, &u)
            + sc.steady_cost
            + sc.s * d.norm_squared();
        (margin, sc.mu * nu.dot(&d))
    };
    let results: Vec<(f64, f64)> = points.par_iter().map(evaluate).collect();
    let pick = |a: (f64, usize), b: (f64, usize)| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a };
    let (worst_margin, worst_at) = results
        .par_iter()
        .enumerate()
        .map(|(i, r)| (r.0, i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), pick);
    let worst_subgradient = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let violations = results.iter().filter(|r| !(r.0 <= DISSIPATION_TOL)).count();
    let subgradient_violations = results.iter().filter(|r| !(r.1 <= SUBGRADIENT_TOL)).count();
    Ok(DissipationReport {
        samples: points.len(),
        violations,
        worst_margin,
        worst_point: points[worst_at].as_slice().to_vec(),
        subgradient_violations,
        worst_subgradient,
        passed: violations == 0 && subgradient_violations == 0,
    })
}
