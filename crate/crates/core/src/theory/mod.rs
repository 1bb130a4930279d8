//! Finite-class theory track: MLE, confidence sets, uncertainty-driven
//! exploration and exact regret bookkeeping.

mod class;
mod explore;
mod mle;
mod regret;

pub use class::ModelClass;
pub use explore::{
    exploration_candidates, exploration_score, reward_uncertainty, theoretical_exploration_policy,
    transition_uncertainty, ExplorationChoice, UncertaintyContext,
};
pub use mle::{
    bt_log_likelihood, confidence_set, confidence_sets, mle_reward, mle_transition,
    transition_log_likelihood, MleChoice,
};
pub use regret::{run_theoretical_loop, RegretLedger, RegretRow, TheoryConfig};
