use crate::env::{Trajectory, TreeIndex};
use crate::error::{CoreError, Result};
use crate::math::{argmax_first, log_sigmoid};
use crate::preference::PreferenceRecord;

use super::class::ModelClass;

/// Result of a maximum-likelihood selection over a finite candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct MleChoice {
    pub index: usize,
    pub log_likelihoods: Vec<f64>,
    /// No data, or every candidate at `-inf`; `index` is then 0.
    pub degenerate: bool,
}

fn choose(log_likelihoods: Vec<f64>, empty: bool) -> MleChoice {
    let finite = log_likelihoods.iter().any(|l| l.is_finite());
    let index = if finite {
        argmax_first(&log_likelihoods).unwrap_or(0)
    } else {
        0
    };
    MleChoice {
        index,
        log_likelihoods,
        degenerate: empty || !finite,
    }
}

/// Bradley-Terry log-likelihood of `records` under a terminal utility table.
pub fn bt_log_likelihood(records: &[PreferenceRecord], utility: &[f64], tree: &TreeIndex) -> f64 {
    records
        .iter()
        .map(|r| {
            let d = utility[r.traj_1.terminal_sa(tree)] - utility[r.traj_2.terminal_sa(tree)];
            if r.z {
                log_sigmoid(d)
            } else {
                log_sigmoid(-d)
            }
        })
        .sum()
}

/// Reward MLE over the class's utility candidates. Ties go to the lowest index.
pub fn mle_reward(records: &[PreferenceRecord], class: &ModelClass) -> MleChoice {
    let tree = class.skeleton().tree();
    let ll = class
        .utilities()
        .iter()
        .map(|u| bt_log_likelihood(records, u, tree))
        .collect();
    choose(ll, records.is_empty())
}

/// `Σ_τ Σ_h log P(o_h | s_h, a_h)` for one kernel (sao-indexed).
///
/// Policy factors are shared by every candidate and left out.
pub fn transition_log_likelihood(
    trajectories: &[Trajectory],
    kernel: &[f64],
    tree: &TreeIndex,
) -> f64 {
    let mut total = 0.0;
    for t in trajectories {
        for sao in t.sao_slots(tree) {
            let p = kernel[sao];
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += p.ln();
        }
    }
    total
}

/// Transition MLE over the class's kernel candidates. A candidate that rules
/// out an observed transition scores `-inf`.
pub fn mle_transition(trajectories: &[Trajectory], class: &ModelClass) -> MleChoice {
    let tree = class.skeleton().tree();
    let ll = class
        .kernels()
        .iter()
        .map(|k| transition_log_likelihood(trajectories, k, tree))
        .collect();
    choose(ll, trajectories.is_empty())
}

/// Indices whose log-likelihood is within `c1 · ln(size · T / δ)` of the best.
///
/// With every entry at `-inf` the whole class is returned.
pub fn confidence_set(
    log_likelihoods: &[f64],
    c1: f64,
    rounds: usize,
    delta: f64,
) -> Result<Vec<usize>> {
    if !(c1 > 0.0) {
        return Err(CoreError::Config(format!("c1 must be > 0, got {c1}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(CoreError::Config(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if rounds == 0 {
        return Err(CoreError::Config("rounds must be >= 1".into()));
    }
    if log_likelihoods.is_empty() {
        return Err(CoreError::Config("empty candidate list".into()));
    }
    let best = log_likelihoods
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Ok((0..log_likelihoods.len()).collect());
    }
    let radius = c1 * (log_likelihoods.len() as f64 * rounds as f64 / delta).ln();
    Ok(log_likelihoods
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= best - radius)
        .map(|(i, _)| i)
        .collect())
}

/// Utility and kernel confidence sets, in that order.
pub fn confidence_sets(
    reward: &MleChoice,
    transition: &MleChoice,
    c1: f64,
    rounds: usize,
    delta: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    Ok((
        confidence_set(&reward.log_likelihoods, c1, rounds, delta)?,
        confidence_set(&transition.log_likelihoods, c1, rounds, delta)?,
    ))
}
