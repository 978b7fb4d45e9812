mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

use common::{random_ocp_case, random_vector, rng};
use turnpike_core::linalg::sym_eig_range;
use turnpike_core::model::{is_admissible, Trajectory};
use turnpike_core::ocp::{condense, solve_ocp, solve_ocp_with, OcpOptions};
use turnpike_core::Error;

fn stacked(controls: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        controls.iter().map(|u| u.len()).sum(),
        controls.iter().flat_map(|u| u.iter().copied()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn condensed_cost_matches_rollout(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, x0, horizon) = random_ocp_case(&mut r);
        let qp = condense(&p, &x0, horizon).unwrap();
        let controls: Vec<_> = (0..horizon).map(|_| random_vector(&mut r, p.m())).collect();
        let flat = stacked(&controls);
        let t = Trajectory::rollout(&p, &x0, controls).unwrap();
        prop_assert!((qp.cost(&flat) - t.total_cost).abs() <= 1e-9 * (1.0 + t.total_cost.abs()));
        for (i, x) in t.states.iter().enumerate() {
            prop_assert!((qp.state(i, &flat) - x).norm() <= 1e-10 * (1.0 + x.norm()));
        }
        let (lo, _) = sym_eig_range(&qp.p3);
        let (r_lo, _) = sym_eig_range(p.r());
        prop_assert!(lo >= r_lo - 1e-9);
    }

    #[test]
    fn solutions_are_admissible_and_unique(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, x0, horizon) = random_ocp_case(&mut r);
        let plain = match solve_ocp(&p, &x0, horizon) {
            Ok(t) => t,
            Err(Error::Infeasible { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(is_admissible(&p, &plain).admissible);
        let opts = OcpOptions {
            initial_controls: Some((0..horizon).map(|_| random_vector(&mut r, p.m()) * 3.0).collect()),
            ..OcpOptions::default()
        };
        let other = solve_ocp_with(&p, &x0, horizon, &opts).unwrap().trajectory;
        prop_assert!(is_admissible(&p, &other).admissible);
        prop_assert!((stacked(&plain.controls) - stacked(&other.controls)).amax() <= 1e-5);
    }

    // V_N(x₀) ≤ ℓ(x₀, u) + V_{N−1}(Ax₀ + Bu) for feasible first moves u
    #[test]
    fn dynamic_programming_consistency(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, x0, horizon) = random_ocp_case(&mut r);
        prop_assume!(horizon >= 2);
        let value = match solve_ocp(&p, &x0, horizon) {
            Ok(t) => t.total_cost,
            Err(Error::Infeasible { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let mut tried = 0;
        while tried < 5 {
            let u = DVector::from_fn(p.m(), |_, _| r.random_range(-2.0..2.0));
            if !p.set().contains(&x0, &u, 0.0) {
                continue;
            }
            tried += 1;
            let next = p.step_dynamics(&x0, &u).unwrap();
            match solve_ocp(&p, &next, horizon - 1) {
                Ok(tail) => {
                    let bound = p.stage_cost(&x0, &u).unwrap() + tail.total_cost;
                    prop_assert!(value <= bound + 1e-7 * (1.0 + bound.abs()), "{value} > {bound}");
                }
                Err(Error::Infeasible { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }
}
