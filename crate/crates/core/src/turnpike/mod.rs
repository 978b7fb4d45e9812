//! Empirical measure-turnpike checks: witness policies and their decay
//! envelope, the cost-gap bound, exceedance counts and horizon scans.

mod bounds;
mod decay;
mod initial_set;
mod policy;
mod scan;

pub use bounds::{cost_gap_bound, exceedance_count, regularize_control, turnpike_bound, CostGapBound};
pub use decay::{
    build_witness, fit_exponential_decay, fit_exponential_decay_after, DecayFit, StabilizabilityWitness, DEFAULT_RATE,
};
pub use initial_set::InitialSet;
pub use policy::{simulate_policy, BuiltinPolicy, FeedbackPolicy, PolicyRun};
pub use scan::{prepare_scan, turnpike_scan, CountSpread, ScanCell, ScanSetup, TurnpikeReport, THREADS_ENV};
