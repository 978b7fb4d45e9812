use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::bounds::{cost_gap_bound, exceedance_count, turnpike_bound, CostGapBound};
use super::decay::{build_witness, StabilizabilityWitness};
use super::policy::FeedbackPolicy;
use crate::dissipativity::{certify, RateChoice, StorageCertificate};
use crate::model::{Problem, Trajectory};
use crate::ocp::{solve_ocp_with, OcpOptions};
use crate::steady_state::SteadyStateCertificate;
use crate::{Error, Result};

/// Environment variable capping the number of worker threads of a scan.
pub const THREADS_ENV: &str = "TURNPIKE_THREADS";

/// Everything a scan needs besides the grid itself.
#[derive(Debug, Clone)]
pub struct ScanSetup {
    pub steady: SteadyStateCertificate,
    pub storage: StorageCertificate,
    pub witness: StabilizabilityWitness,
    pub cost_gap: CostGapBound,
    /// Solver settings for every cell.
    pub ocp: OcpOptions,
}

/// Certify the steady state and storage function, then build the witness
/// envelope from `policy` over `points`.
pub fn prepare_scan(
    p: &Problem,
    policy: &dyn FeedbackPolicy,
    points: &[DVector<f64>],
    witness_horizon: usize,
    skip: usize,
    rate: RateChoice,
) -> Result<ScanSetup> {
    let (steady, storage) = certify(p, rate)?;
    let (x_e, u_e) = (steady.x_vec(), steady.u_vec());
    let witness = build_witness(p, policy, points, &x_e, witness_horizon, skip)?;
    let cost_gap = cost_gap_bound(p, &witness, &x_e, &u_e);
    Ok(ScanSetup {
        steady,
        storage,
        witness,
        cost_gap,
        ocp: OcpOptions::default(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanCell {
    pub x0_id: usize,
    pub horizon: usize,
    pub eps: f64,
    /// `None` when the problem is infeasible from this `x0`.
    pub count: Option<usize>,
    pub bound: f64,
    pub ok: bool,
}

/// Largest spread of the counts across horizons for one `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct CountSpread {
    pub eps: f64,
    /// Over horizons where the count is below `N`.
    pub unsaturated: usize,
    pub raw: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeReport {
    pub cells: Vec<ScanCell>,
    /// `M_E = (M + spread) / s`.
    pub m_e: f64,
    pub cost_gap: f64,
    pub rate: f64,
    /// `max |V(x*(N)) − V(x₀)|` over the feasible cells.
    pub storage_spread: f64,
    /// `max V(x₀) − inf_X V` when the storage is bounded below on `X`.
    pub storage_spread_a_priori: Option<f64>,
    /// Largest `count·ε / M_E`.
    pub worst_ratio: f64,
    pub count_spread: Vec<CountSpread>,
    pub infeasible_cells: usize,
    pub all_ok: bool,
    /// `‖x*(i) − x_e‖` along the longest horizon, one series per initial state.
    pub decay_series: Vec<Vec<f64>>,
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|n: &usize| *n > 0)
}

fn solve_grid(p: &Problem, opts: &OcpOptions, jobs: &[(usize, &DVector<f64>, usize)]) -> Result<Vec<Option<Trajectory>>> {
    let run = || {
        jobs.par_iter()
            .map(|(_, x0, horizon)| match solve_ocp_with(p, x0, *horizon, opts) {
                Ok(sol) => Ok(Some(sol.trajectory)),
                Err(Error::Infeasible { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()
    };
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Exceedance counts over the grid `points × horizons × epsilons`, each
/// checked against `M_E / ε`. Cells are reported in `(x₀, N, ε)` order.
pub fn turnpike_scan(
    p: &Problem,
    setup: &ScanSetup,
    points: &[DVector<f64>],
    horizons: &[usize],
    epsilons: &[f64],
) -> Result<TurnpikeReport> {
    let (x_e, u_e) = (setup.steady.x_vec(), setup.steady.u_vec());
    let sc = &setup.storage;
    let jobs: Vec<(usize, &DVector<f64>, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(j, x0)| horizons.iter().map(move |&n| (j, x0, n)))
        .collect();
    let solutions = solve_grid(p, &setup.ocp, &jobs)?;

    let storage_spread = solutions
        .iter()
        .flatten()
        .map(|t| (sc.value(t.states.last().unwrap()) - sc.value(&t.states[0])).abs())
        .fold(0.0, f64::max);
    let storage_spread_a_priori = sc.lower_bound_on_x.map(|lb| {
        points.iter().map(|x| sc.value(x)).fold(f64::NEG_INFINITY, f64::max) - lb
    });
    let m_e = (setup.cost_gap.m + storage_spread) / sc.s;

    let mut cells = Vec::with_capacity(jobs.len() * epsilons.len());
    for ((j, _, horizon), sol) in jobs.iter().zip(&solutions) {
        for &eps in epsilons {
            let bound = turnpike_bound(setup.cost_gap.m, sc.s, storage_spread, eps);
            let count = sol.as_ref().map(|t| exceedance_count(t, &x_e, &u_e, eps));
            cells.push(ScanCell {
                x0_id: *j,
                horizon: *horizon,
                eps,
                count,
                bound,
                ok: count.is_some_and(|c| c as f64 <= bound),
            });
        }
    }

    let count_spread = epsilons
        .iter()
        .map(|&eps| {
            let mut unsaturated = 0;
            let mut raw = 0;
            for j in 0..points.len() {
                let row: Vec<(usize, usize)> = cells
                    .iter()
                    .filter(|c| c.x0_id == j && c.eps == eps)
                    .filter_map(|c| c.count.map(|k| (k, c.horizon)))
                    .collect();
                let spread = |it: &mut dyn Iterator<Item = usize>| {
                    let v: Vec<usize> = it.collect();
                    v.iter().max().zip(v.iter().min()).map_or(0, |(a, b)| a - b)
                };
                raw = raw.max(spread(&mut row.iter().map(|r| r.0)));
                unsaturated = unsaturated.max(spread(&mut row.iter().filter(|r| r.0 < r.1).map(|r| r.0)));
            }
            CountSpread { eps, unsaturated, raw }
        })
        .collect();

    let worst_ratio = cells
        .iter()
        .filter_map(|c| c.count.map(|k| k as f64 * c.eps / m_e))
        .fold(0.0, f64::max);
    let infeasible_cells = cells.iter().filter(|c| c.count.is_none()).count();
    let all_ok = cells.iter().all(|c| c.ok || c.count.is_none());

    let longest = horizons.iter().copied().max().unwrap_or(0);
    let decay_series = jobs
        .iter()
        .zip(&solutions)
        .filter(|((_, _, n), _)| *n == longest)
        .map(|(_, sol)| {
            sol.as_ref()
                .map(|t| t.states.iter().map(|x| (x - &x_e).norm()).collect())
                .unwrap_or_default()
        })
        .collect();

    Ok(TurnpikeReport {
        cells,
        m_e,
        cost_gap: setup.cost_gap.m,
        rate: sc.s,
        storage_spread,
        storage_spread_a_priori,
        worst_ratio,
        count_spread,
        infeasible_cells,
        all_ok,
        decay_series,
    })
}
