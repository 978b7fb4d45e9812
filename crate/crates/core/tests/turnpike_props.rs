mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::{random_matrix, random_problem, random_vector, rng, SetKind};
use turnpike_core::dissipativity::RateChoice;
use turnpike_core::model::{is_admissible, ConstraintSet, Problem, Trajectory};
use turnpike_core::ocp::solve_ocp;
use turnpike_core::scenarios::{cone_feedback, decay, example_cone, example_rotation_box};
use turnpike_core::turnpike::{
    build_witness, cost_gap_bound, exceedance_count, prepare_scan, regularize_control, simulate_policy,
    BuiltinPolicy, InitialSet,
};

/// Point of `{x₃ ≥ ‖(x₁, x₂)‖, x₃ ≤ 5}`.
fn cone_point(r: &mut impl Rng) -> DVector<f64> {
    let height = r.random_range(0.0..=5.0);
    let radius = height * r.random_range(0.0..=1.0f64).sqrt();
    let angle = r.random_range(0.0..std::f64::consts::TAU);
    DVector::from_vec(vec![radius * angle.cos(), radius * angle.sin(), height])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn regularized_controls_leave_states_unchanged(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=4);
        let m = r.random_range(1..=4);
        let rank = r.random_range(0..=n.min(m));
        let b = random_matrix(&mut r, n, rank) * random_matrix(&mut r, rank, m);
        let p = Problem::new(
            random_matrix(&mut r, n, n) * 0.5,
            b,
            DMatrix::identity(n, n),
            DMatrix::identity(m, m),
            DVector::zeros(n),
            DVector::zeros(m),
            0.0,
            ConstraintSet::full(n, m),
        )
        .unwrap();
        let horizon = r.random_range(1..=20);
        let x0 = random_vector(&mut r, n);
        let u_e = random_vector(&mut r, m);
        let controls: Vec<_> = (0..horizon).map(|_| random_vector(&mut r, m)).collect();
        let plain = Trajectory::rollout(&p, &x0, controls.clone()).unwrap();
        let reg = regularize_control(p.b(), &controls, &u_e);
        let tilde = Trajectory::rollout(&p, &x0, reg.clone()).unwrap();
        for (a, b) in plain.states.iter().zip(&tilde.states) {
            prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
        }
        for (u, v) in controls.iter().zip(&reg) {
            prop_assert!((p.b() * u - p.b() * v).norm() <= 1e-12 * (1.0 + u.norm()) * (1.0 + p.b().norm()));
        }
    }

    #[test]
    fn counts_are_bounded_and_monotone_in_eps(seed in any::<u64>(), e1 in 1e-4..2.0f64, e2 in 1e-4..2.0f64) {
        let mut r = rng(seed);
        let n = r.random_range(1..=3);
        let m = r.random_range(1..=3);
        let p = random_problem(&mut r, n, m, SetKind::Box);
        let horizon = r.random_range(0..=30);
        let controls: Vec<_> = (0..horizon).map(|_| random_vector(&mut r, m) * 0.5).collect();
        let t = Trajectory::rollout(&p, &random_vector(&mut r, n), controls).unwrap();
        let (x_e, u_e) = (random_vector(&mut r, n) * 0.1, random_vector(&mut r, m) * 0.1);
        let (small, large) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let c_small = exceedance_count(&t, &x_e, &u_e, small);
        let c_large = exceedance_count(&t, &x_e, &u_e, large);
        prop_assert!(c_small >= c_large);
        prop_assert!(c_small <= horizon);
    }

    // x₃(k+1) = e^{−0.1}‖(x₁, x₂)(k)‖ once the feedback stops saturating
    #[test]
    fn cone_feedback_induction(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = example_cone();
        let x0 = cone_point(&mut r);
        let run = simulate_policy(&p, &cone_feedback, &x0, 40).unwrap();
        prop_assert_eq!(run.first_violation, None);
        let t = &run.trajectory;
        let saturated = t.controls.iter().take_while(|u| u[0] >= 1.0).count();
        // each saturated step lowers x₃ by one
        prop_assert!(saturated <= 6);
        for k in saturated..t.horizon() {
            prop_assert!(t.controls[k][0] < 1.0, "saturation returns at {k}");
            let radial = t.states[k][0].hypot(t.states[k][1]);
            prop_assert!((t.states[k + 1][2] - decay() * radial).abs() <= 1e-10);
            prop_assert!((0.0..=1.0).contains(&t.controls[k][0]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // count·ε ≤ M_E on the rotation example, where the optimal control is zero
    #[test]
    fn exceedance_bound_on_rotation_example(seed in any::<u64>(), horizon in 5..80usize) {
        let scenario = example_rotation_box();
        let p = &scenario.problem;
        let points = scenario.initial_set.sample(p, 4, seed).unwrap();
        let policy = BuiltinPolicy::Zero { m: 2 };
        let setup = prepare_scan(p, &policy, &points, 200, 0, RateChoice::Auto).unwrap();
        let (x_e, u_e) = (setup.steady.x_vec(), setup.steady.u_vec());
        let sc = &setup.storage;
        for x0 in &points {
            let t = solve_ocp(p, x0, horizon).unwrap();
            prop_assert!(is_admissible(p, &t).admissible);
            let spread = (sc.value(t.states.last().unwrap()) - sc.value(x0)).abs();
            let m_e = (setup.cost_gap.m + spread) / sc.s;
            for eps in [1e-3, 1e-2, 1e-1, 0.5] {
                let count = exceedance_count(&t, &x_e, &u_e, eps);
                prop_assert!(count as f64 * eps <= m_e + 1e-6);
            }
        }
    }

    #[test]
    fn witness_envelope_and_stage_gaps(seed in any::<u64>()) {
        let scenario = example_rotation_box();
        let p = &scenario.problem;
        let points = InitialSet::Ball { center: vec![0.0, 0.0], radius: 1.0 }.sample(p, 10, seed).unwrap();
        let (x_e, u_e) = (DVector::zeros(2), DVector::zeros(2));
        let witness = build_witness(p, &BuiltinPolicy::Zero { m: 2 }, &points, &x_e, 100, 0).unwrap();
        prop_assert!(witness.envelope_excess(&x_e) <= 1e-9);
        let bound = cost_gap_bound(p, &witness, &x_e, &u_e);
        prop_assert!((bound.m - bound.m2 / (1.0 - (-witness.rho).exp())).abs() <= 1e-12 * bound.m.max(1.0));
        for (i, gap) in bound.stage_gaps.iter().enumerate() {
            prop_assert!(*gap <= bound.m2 * (-witness.rho * i as f64).exp() + 1e-9);
        }
    }
}
