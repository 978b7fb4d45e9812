mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

use common::{random_problem, rng, SetKind};
use turnpike_core::model::Problem;
use turnpike_core::steady_state::{certified_steady_state, solve_steady_state, verify_kkt};
use turnpike_core::system_analysis::{has_unit_modulus_unobservable, kernel_basis_steady};

fn problem(seed: u64) -> Problem {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let m = r.random_range(1..=3);
    let kind = if r.random_bool(0.5) { SetKind::Box } else { SetKind::Cone };
    random_problem(&mut r, n, m, kind)
}

fn cost(p: &Problem, w: &DVector<f64>) -> f64 {
    let (x, u) = p.set().split(w);
    p.stage_cost(&x, &u).unwrap()
}

/// Steady pairs `(x, u)` with `Ax + Bu = x` that lie in `S`.
fn feasible_steady_pairs(p: &Problem, seed: u64, count: usize, scale: f64) -> Vec<DVector<f64>> {
    let basis = kernel_basis_steady(p.a(), p.b());
    if basis.ncols() == 0 {
        return Vec::new();
    }
    let mut r = rng(seed);
    (0..50 * count)
        .map(|_| &basis * DVector::from_fn(basis.ncols(), |_, _| r.random_range(-scale..scale)))
        .filter(|w| p.set().g_stacked(w) <= 0.0)
        .take(count)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn restarts_agree(seed in any::<u64>()) {
        let p = problem(seed);
        prop_assume!(!has_unit_modulus_unobservable(p.a(), p.c()));
        let steady = solve_steady_state(&p).unwrap();
        prop_assert!(steady.restart_spread <= 1e-7, "spread {}", steady.restart_spread);
    }

    #[test]
    fn certificate_invariants(seed in any::<u64>()) {
        let p = problem(seed);
        prop_assume!(!has_unit_modulus_unobservable(p.a(), p.c()));
        let cert = certified_steady_state(&p).unwrap();
        prop_assert!(cert.kkt_ok);
        prop_assert!(cert.residuals.steadiness <= 1e-8);
        prop_assert!(cert.mu >= -1e-10);
        prop_assert!((cert.mu * cert.g).abs() <= 1e-8);
        prop_assert!(verify_kkt(&cert, &p).passed);
    }

    #[test]
    fn optimal_value_bounds_sampled_steady_pairs(seed in any::<u64>()) {
        let p = problem(seed);
        prop_assume!(!has_unit_modulus_unobservable(p.a(), p.c()));
        let cert = certified_steady_state(&p).unwrap();
        for w in feasible_steady_pairs(&p, seed ^ 1, 500, 3.0) {
            prop_assert!(cert.optimal_value <= cost(&p, &w) + 1e-8);
        }
    }

    // ℓ((w₁+w₂)/2) = (ℓ(w₁)+ℓ(w₂))/2 − ¼(‖C(x₁−x₂)‖² + ‖K(u₁−u₂)‖²)
    #[test]
    fn midpoint_improves_on_average(seed in any::<u64>()) {
        let p = problem(seed);
        let pairs = feasible_steady_pairs(&p, seed ^ 2, 20, 3.0);
        for w in pairs.windows(2) {
            let (dx, du) = p.set().split(&(&w[0] - &w[1]));
            let curvature = (p.c() * dx).norm_squared() + (p.k() * du).norm_squared();
            let mid = (&w[0] + &w[1]) * 0.5;
            let average = 0.5 * (cost(&p, &w[0]) + cost(&p, &w[1]));
            prop_assert!(cost(&p, &mid) <= average - 0.25 * curvature + 1e-10 * (1.0 + average.abs()));
        }
    }
}
