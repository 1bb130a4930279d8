//! Practical online iterative loop: sample, annotate, train, manage the reference.

mod config;
mod metrics;
mod sampling;
mod state;

pub use config::{Exploration, LoopConfig, ReferenceMode, TrainerKind};
pub use metrics::{write_metrics_csv, RoundMetrics, METRICS_HEADER};
pub use sampling::{
    mixture_sampling, select_best_model, temperature_policy, west_of_n_pairs,
    FIRST_ROUND_TEMPERATURES,
};
pub use state::{run_iteration, run_online, IterationState, RoundCheckpoint};
