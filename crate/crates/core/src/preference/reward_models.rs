use std::collections::BTreeMap;

use rand::Rng;

use crate::env::{sample_from_prompt, Policy, TabularMdp, Trajectory};
use crate::error::{CoreError, Result};
use crate::preference::{UtilityFunction, UtilityKind};

/// Prediction for terminal pairs never seen in training data.
const UNSEEN: f64 = 0.5;

fn gold_labels(mdp: &TabularMdp, gold: &BTreeMap<usize, usize>) -> Result<Vec<usize>> {
    (0..mdp.tree().num_prompts())
        .map(|x| {
            gold.get(&x)
                .copied()
                .ok_or_else(|| CoreError::Config(format!("no gold answer for prompt {x}")))
        })
        .collect()
}

fn is_correct(mdp: &TabularMdp, gold: &[usize], terminal_sa: usize) -> bool {
    let prompt = mdp.tree().prompt_of(mdp.tree().state_of_sa(terminal_sa));
    mdp.answer(terminal_sa) == Some(gold[prompt])
}

/// `u = 1{final answer == gold}`.
pub fn result_check_utility(
    mdp: &TabularMdp,
    gold: &BTreeMap<usize, usize>,
) -> Result<UtilityFunction> {
    let gold = gold_labels(mdp, gold)?;
    let tree = mdp.tree();
    let mut values = vec![0.0; tree.num_sa()];
    for sa in tree.terminal_sa() {
        values[sa] = if is_correct(mdp, &gold, sa) { 1.0 } else { 0.0 };
    }
    UtilityFunction::build(UtilityKind::ResultCheck, tree, values, None, 1.0)
}

/// Tabular outcome reward model: the cross-entropy fit of a per-terminal
/// correctness probability is the empirical success frequency.
pub fn train_orm<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    n: usize,
    gold: &BTreeMap<usize, usize>,
    rng: &mut R,
) -> Result<UtilityFunction> {
    if n == 0 {
        return Err(CoreError::Config(
            "ORM needs at least one sample per prompt".into(),
        ));
    }
    let gold = gold_labels(mdp, gold)?;
    let tree = mdp.tree();
    let mut hits = vec![0usize; tree.num_sa()];
    let mut visits = vec![0usize; tree.num_sa()];
    for x in 0..tree.num_prompts() {
        for _ in 0..n {
            let sa = sample_from_prompt(mdp, policy, x, rng)?.terminal_sa(tree);
            visits[sa] += 1;
            hits[sa] += is_correct(mdp, &gold, sa) as usize;
        }
    }
    let values = (0..tree.num_sa())
        .map(|sa| {
            if visits[sa] == 0 {
                if tree.is_terminal(tree.state_of_sa(sa)) {
                    UNSEEN
                } else {
                    0.0
                }
            } else {
                hits[sa] as f64 / visits[sa] as f64
            }
        })
        .collect();
    UtilityFunction::build(UtilityKind::Orm, tree, values, None, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrmMode {
    Soft,
    Hard,
}

/// Continuation-success labels: from every `(s_h, a_h)`, `n` rollouts under
/// `policy`; soft is the success rate, hard is `1{soft > 0}`.
pub fn prm_proxy_labels<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    n: usize,
    gold: &BTreeMap<usize, usize>,
    mode: PrmMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(CoreError::Config(
            "PRM labels need at least one rollout".into(),
        ));
    }
    policy.check_covers(mdp.tree())?;
    let gold = gold_labels(mdp, gold)?;
    let tree = mdp.tree();
    let mut labels = Vec::with_capacity(tree.num_sa());
    for sa in 0..tree.num_sa() {
        let wins = (0..n)
            .filter(|_| is_correct(mdp, &gold, crate::env::rollout_from(mdp, policy, sa, rng)))
            .count();
        let soft = wins as f64 / n as f64;
        labels.push(match mode {
            PrmMode::Soft => soft,
            PrmMode::Hard => (wins > 0) as u8 as f64,
        });
    }
    Ok(labels)
}

/// Fits tabular step rewards on the steps of `dataset` (the per-entry
/// cross-entropy minimizer is the label itself; unseen entries get 0.5) and
/// returns `u = min_h r_θ(s_h, a_h)`.
pub fn train_prm_and_min_utility(
    mdp: &TabularMdp,
    labels: &[f64],
    dataset: &[Trajectory],
) -> Result<UtilityFunction> {
    let tree = mdp.tree();
    if labels.len() != tree.num_sa() {
        return Err(CoreError::Structural("label table size mismatch".into()));
    }
    if labels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(CoreError::Domain("PRM labels must lie in [0, 1]".into()));
    }
    if dataset.is_empty() {
        return Err(CoreError::EmptyData("PRM training set is empty".into()));
    }
    let mut reward = vec![UNSEEN; tree.num_sa()];
    for traj in dataset {
        for sa in traj.sa_slots(tree) {
            reward[sa] = labels[sa];
        }
    }
    let mut values = vec![0.0; tree.num_sa()];
    for sa in tree.terminal_sa() {
        let path_min = tree
            .history(tree.state_of_sa(sa))
            .iter()
            .map(|&(prev, _)| reward[prev])
            .fold(reward[sa], f64::min);
        values[sa] = path_min;
    }
    UtilityFunction::build(UtilityKind::PrmMin, tree, values, Some(reward), 1.0)
}
