//! Finite-horizon history-tree MDPs with external observations.

mod evaluate;
mod generate;
mod mdp;
mod policy;
mod spec;
mod trajectory;
mod tree;

pub use evaluate::{
    all_trajectories, enumerate_trajectories, exact_expected_value, expected_kl, expected_table,
    expected_utility, expected_utility_on, per_state_kl, policy_value_tables, reach_probabilities,
};
pub use generate::build_environment;
pub(crate) use generate::dirichlet_flat;
pub use mdp::{MdpParts, TabularMdp, NORMALIZATION_TOL};
pub use policy::{Policy, PolicyCheckpoint};
pub use spec::{EnvSpec, Family, ENV_KEYS};
pub use trajectory::{
    rollout_from, sample_from_prompt, sample_trajectory, trajectory_log_prob, Trajectory,
};
pub use tree::{Edge, StateId, TreeIndex, TreeShape};
