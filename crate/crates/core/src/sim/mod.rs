//! Scenario simulation: ground truth, synthetic scans, OSPA scoring and the
//! centralized / distributed filter runs with Monte-Carlo aggregation.

mod measure;
mod ospa;
mod runner;
mod truth;

pub use measure::generate_measurements;
pub use ospa::ospa;
pub use runner::{
    monte_carlo, run_centralized, run_distributed, trial_rng, CentralizedTracker, DistributedRun, DistributedTracker,
    FilterKind, MetricsFrame, MonteCarloResult, Scenario, Summary,
};
pub use truth::{generate_truth, TruthRecord, TruthState};
