//! Direct preference optimization on tabular softmax policies with exact
//! analytic gradients.

mod config;
mod data;
mod descent;
mod dpo;
mod kto;
mod raft;

pub use config::TrainerConfig;
pub use data::{LabeledData, PairData, PathCache};
pub use descent::{gradient_descent, train, write_trace_csv, TraceRow, TrainOutcome};
pub use dpo::{
    m_dpo_loss_and_grad, nll_augmented_m_dpo, single_turn_dpo_loss_and_grad, DpoObjective,
};
pub use kto::{m_kto_loss_and_grad, single_turn_kto_loss_and_grad, KtoObjective};
pub use raft::{raft_update, NllObjective};

use crate::env::Policy;
use crate::error::{CoreError, Result};

/// Gradient with respect to action logits and, for unmasked objectives,
/// observation-predictor logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub action: Vec<f64>,
    pub observation: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Gradient,
    /// Mean log-probability of preferred (or desirable) trajectories.
    pub mean_logp_winner: f64,
    /// Mean log-probability of rejected (or undesirable) trajectories; NaN when absent.
    pub mean_logp_loser: f64,
    /// KTO reference point used for this evaluation.
    pub z0: Option<f64>,
}

/// A differentiable training loss over policy logits.
pub trait Objective {
    fn evaluate(&mut self, policy: &Policy) -> Result<Evaluation>;
}

/// Per-slot coefficients on `log π(a|s)` and `log q(o|s,a)`, turned into a
/// logit gradient through the softmax Jacobian.
pub(crate) struct GradAccumulator {
    sa: Vec<f64>,
    state: Vec<f64>,
    sao: Option<(Vec<f64>, Vec<f64>)>,
}

impl GradAccumulator {
    pub(crate) fn new(policy: &Policy, with_obs: bool) -> Self {
        let tree = policy.tree();
        GradAccumulator {
            sa: vec![0.0; tree.num_sa()],
            state: vec![0.0; tree.num_states()],
            sao: with_obs.then(|| (vec![0.0; tree.num_sao()], vec![0.0; tree.num_sa()])),
        }
    }

    /// Adds `c · ∇ Σ log-probabilities along the path`.
    pub(crate) fn add_path(&mut self, policy: &Policy, path: &[(usize, Option<usize>)], c: f64) {
        let tree = policy.tree();
        for &(sa, sao) in path {
            self.sa[sa] += c;
            self.state[tree.state_of_sa(sa).0] += c;
            if let (Some((per_sao, per_sa)), Some(sao)) = (self.sao.as_mut(), sao) {
                per_sao[sao] += c;
                per_sa[sa] += c;
            }
        }
    }

    pub(crate) fn finish(self, policy: &Policy) -> Gradient {
        let tree = policy.tree();
        let action = (0..tree.num_sa())
            .map(|sa| self.sa[sa] - self.state[tree.state_of_sa(sa).0] * policy.prob(sa))
            .collect();
        let observation = self.sao.map(|(per_sao, per_sa)| {
            let logq = policy.obs_log_probs().expect("checked by the objective");
            let mut g = vec![0.0; tree.num_sao()];
            for sa in 0..tree.num_sa() {
                for sao in tree.obs_range(sa) {
                    g[sao] = per_sao[sao] - per_sa[sa] * logq[sao].exp();
                }
            }
            g
        });
        Gradient {
            action,
            observation,
        }
    }
}

/// `Σ (log π − log ref)` over actions, plus observation terms when unmasked.
pub(crate) fn path_log_ratio(
    policy: &Policy,
    reference: &Policy,
    path: &[(usize, Option<usize>)],
    mask: bool,
) -> f64 {
    let mut total = 0.0;
    for &(sa, sao) in path {
        total += policy.log_prob(sa) - reference.log_prob(sa);
        if let (false, Some(sao)) = (mask, sao) {
            total += policy.obs_log_prob(sao).unwrap() - reference.obs_log_prob(sao).unwrap();
        }
    }
    total
}

pub(crate) fn path_log_prob(policy: &Policy, path: &[(usize, Option<usize>)]) -> f64 {
    path.iter().map(|&(sa, _)| policy.log_prob(sa)).sum()
}

pub(crate) fn check_reference(reference: &Policy, cache: &PathCache, mask: bool) -> Result<()> {
    let tree = reference.tree();
    for path in cache.paths() {
        for &(sa, sao) in path {
            if !reference.log_prob(sa).is_finite() {
                return Err(CoreError::Domain(format!(
                    "reference assigns zero probability to action {} at {}",
                    tree.action_of_sa(sa),
                    tree.state_of_sa(sa)
                )));
            }
            if let (false, Some(sao)) = (mask, sao) {
                if !reference.obs_log_prob(sao).is_some_and(f64::is_finite) {
                    return Err(CoreError::Domain(format!(
                        "reference observation predictor is zero at slot {sao}"
                    )));
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn require_obs_predictors(policy: &Policy, reference: &Policy) -> Result<()> {
    if !policy.has_obs_predictor() || !reference.has_obs_predictor() {
        return Err(CoreError::Config(
            "unmasked objectives need observation predictors on both the policy and the reference"
                .into(),
        ));
    }
    Ok(())
}
