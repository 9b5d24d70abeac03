//! Snapshot data, likelihood, estimation and Monte Carlo.

pub mod counts;
pub mod likelihood;
pub mod mle;
pub mod montecarlo;
pub mod optimize;
pub mod simulate;

pub use counts::{count_transitions, SnapshotDataset, TransitionCounts};
pub use likelihood::{log_likelihood, log_likelihood_gradient, LikelihoodEvaluation, LikelihoodOptions};
pub use mle::{fit_mle, Clock, EstimationResult, FitOptions, GradientMode, NoClock};
pub use montecarlo::{
    run_monte_carlo, run_replication, simulate_replication_data, summarize, McConfig, McSummary, ParameterStats,
    ReplicationRecord, SampleStats,
};
pub use optimize::{minimize_bounded, LbfgsOptions, LbfgsOutcome};
pub use simulate::{sample_snapshots, simulate_trajectory, uniform_open01, EventPath};
