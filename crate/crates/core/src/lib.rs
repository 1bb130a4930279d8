//! Exact tabular laboratory for multi-turn, KL-regularized preference learning
//! with external observations.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: history-tree MDPs, policies, trajectories and exact expectations.
//! - [`planner`]: backward-induction Gibbs solver and numerical audits.
//! - [`preference`]: utilities, Bradley–Terry labels and pair annotation.
//! - [`trainers`]: multi-turn DPO/KTO, unmasked baselines, RAFT, NLL ablation.
//! - [`online`]: the practical online iterative loop.
//! - [`theory`]: MLE, confidence sets, uncertainty-driven exploration, regret.

pub mod env;
pub mod error;
pub mod kvdoc;
pub mod math;
pub mod online;
pub mod planner;
pub mod preference;
pub mod theory;
pub mod trainers;

pub use env::{
    build_environment, exact_expected_value, sample_trajectory, trajectory_log_prob, EnvSpec,
    Family, Policy, StateId, TabularMdp, Trajectory, TreeIndex,
};
pub use error::{CoreError, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
