mod common;

use common::{random_ocp_case, rng};
use nalgebra::DVector;
use rand::Rng;
use turnpike_core::model::is_admissible;
use turnpike_core::ocp::{brute_oracle, solve_ocp, solve_ocp_with, OcpOptions};
use turnpike_core::scenarios::example_cone;
use turnpike_core::{Error, Problem, Trajectory};

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// Fifty random instances on which both solvers succeed, plus a count of
/// the cases both flagged infeasible.
fn solved_cases(seed: u64) -> (Vec<(Problem, DVector<f64>, usize, Trajectory, Trajectory)>, usize) {
    let mut r = rng(seed);
    let mut cases = Vec::new();
    let mut infeasible = 0;
    while cases.len() < 50 {
        let (p, x0, horizon) = random_ocp_case(&mut r);
        match (brute_oracle(&p, &x0, horizon), solve_ocp(&p, &x0, horizon)) {
            (Ok(o), Ok(a)) => cases.push((p, x0, horizon, o, a)),
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => infeasible += 1,
            (o, a) => panic!(
                "solvers disagree on N={horizon} x0={x0:?}: oracle {:?} admm {:?}",
                o.map(|t| t.total_cost),
                a.map(|t| t.total_cost)
            ),
        }
    }
    (cases, infeasible)
}

#[test]
fn admm_matches_oracle_on_random_instances() {
    let (cases, _) = solved_cases(5);
    for (p, x0, horizon, oracle, admm) in &cases {
        let gap = relative_gap(admm.total_cost, oracle.total_cost);
        assert!(gap <= 1e-5, "N={horizon} x0={x0:?} gap {gap:e}");
        assert!(is_admissible(p, admm).admissible);
        assert!(is_admissible(p, oracle).admissible);
    }
}

#[test]
fn different_initializations_agree() {
    let mut r = rng(11);
    let mut checked = 0;
    while checked < 15 {
        let (p, x0, horizon) = random_ocp_case(&mut r);
        let Ok(base) = solve_ocp(&p, &x0, horizon) else { continue };
        let radius = p.set().coordinate_bounds()[p.n()..]
            .iter()
            .map(|(lo, hi)| lo.abs().min(hi.abs()))
            .fold(f64::INFINITY, f64::min);
        let start: Vec<DVector<f64>> = (0..horizon)
            .map(|_| DVector::from_fn(p.m(), |_, _| r.random_range(-radius..radius)))
            .collect();
        let opts = OcpOptions {
            initial_controls: Some(start),
            ..OcpOptions::default()
        };
        let other = solve_ocp_with(&p, &x0, horizon, &opts).unwrap().trajectory;
        for (a, b) in base.controls.iter().zip(&other.controls) {
            assert!((a - b).amax() <= 1e-5, "{a:?} vs {b:?}");
        }
        checked += 1;
    }
}

#[test]
fn dynamic_programming_consistency() {
    let mut r = rng(23);
    let mut checked = 0;
    while checked < 10 {
        let (p, x0, horizon) = random_ocp_case(&mut r);
        if horizon < 2 {
            continue;
        }
        let Ok(full) = solve_ocp(&p, &x0, horizon) else { continue };
        let bounds = p.set().coordinate_bounds();
        for _ in 0..5 {
            let u = DVector::from_fn(p.m(), |i, _| {
                let (lo, hi) = bounds[p.n() + i];
                r.random_range(lo.max(-5.0)..hi.min(5.0))
            });
            if !p.set().contains(&x0, &u, 0.0) {
                continue;
            }
            let next = p.step_dynamics(&x0, &u).unwrap();
            let Ok(tail) = solve_ocp(&p, &next, horizon - 1) else { continue };
            let bound = p.stage_cost(&x0, &u).unwrap() + tail.total_cost;
            assert!(
                full.total_cost <= bound + 1e-7,
                "{} > {bound}",
                full.total_cost
            );
        }
        checked += 1;
    }
}

#[test]
fn cone_example_two_steps_from_origin() {
    let p = example_cone();
    let x0 = DVector::zeros(3);
    for t in [solve_ocp(&p, &x0, 2).unwrap(), brute_oracle(&p, &x0, 2).unwrap()] {
        assert!((t.total_cost + 1.0).abs() < 1e-4);
        assert!(t.controls[0][0].abs() < 1e-4);
        assert!((t.controls[1][0] + 1.0).abs() < 1e-4);
        assert!((t.states[2][2] - 1.0).abs() < 1e-4);
    }
}
