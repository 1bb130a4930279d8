//! Exact expectations over the trajectory tree. No sampling anywhere here.

use crate::env::mdp::TabularMdp;
use crate::env::policy::Policy;
use crate::env::trajectory::Trajectory;
use crate::env::tree::StateId;
use crate::error::{CoreError, Result};
use crate::math::kl_from_logs;

/// Probability of reaching each state under `policy` and the true kernel.
pub fn reach_probabilities(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    let tree = mdp.tree();
    policy.check_covers(tree)?;
    let mut reach = vec![0.0; tree.num_states()];
    for (x, &p) in mdp.prompt_distribution().iter().enumerate() {
        reach[tree.root(x).0] = p;
    }
    // Parents precede children in id order.
    for i in 0..tree.num_states() {
        let s = StateId(i);
        if reach[i] == 0.0 || tree.is_terminal(s) {
            continue;
        }
        for sa in tree.sa_range(s) {
            let pa = reach[i] * policy.prob(sa);
            if pa == 0.0 {
                continue;
            }
            for (o, &po) in mdp.kernel_row(sa).iter().enumerate() {
                reach[tree.child(sa, o).0] += pa * po;
            }
        }
    }
    Ok(reach)
}

/// `KL(π(·|s) ‖ ref(·|s))` for every state.
pub fn per_state_kl(policy: &Policy, reference: &Policy) -> Result<Vec<f64>> {
    let tree = policy.tree();
    reference.check_covers(tree)?;
    Ok((0..tree.num_states())
        .map(|i| {
            kl_from_logs(
                policy.row_log_probs(StateId(i)),
                reference.row_log_probs(StateId(i)),
            )
        })
        .collect())
}

/// `E[Σ_h KL(π_h ‖ ref_h)]` along trajectories of `policy`.
pub fn expected_kl(mdp: &TabularMdp, policy: &Policy, reference: &Policy) -> Result<f64> {
    let reach = reach_probabilities(mdp, policy)?;
    let kl = per_state_kl(policy, reference)?;
    Ok(reach
        .iter()
        .zip(&kl)
        .map(|(r, k)| if *r == 0.0 { 0.0 } else { r * k })
        .sum())
}

/// `E[u(s_H, a_H)]` under `policy`.
pub fn expected_utility(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    expected_table(mdp, policy, mdp.utility_table())
}

/// `E[table(s_H, a_H)]` for an arbitrary terminal table.
pub fn expected_table(mdp: &TabularMdp, policy: &Policy, table: &[f64]) -> Result<f64> {
    let tree = mdp.tree();
    if table.len() != tree.num_sa() {
        return Err(CoreError::Structural("terminal table size mismatch".into()));
    }
    let reach = reach_probabilities(mdp, policy)?;
    Ok(tree
        .terminal_sa()
        .map(|sa| {
            let r = reach[tree.state_of_sa(sa).0];
            if r == 0.0 {
                0.0
            } else {
                r * policy.prob(sa) * table[sa]
            }
        })
        .sum())
}

/// `J(π; M, π_ref) = E[u] − η Σ_h E[KL(π_h ‖ π_ref,h)]`, computed exactly.
///
/// With `eta = 0` this is the plain expected utility.
pub fn exact_expected_value(
    mdp: &TabularMdp,
    policy: &Policy,
    reference: &Policy,
    eta: f64,
) -> Result<f64> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(CoreError::Domain(format!(
            "eta must be finite and >= 0, got {eta}"
        )));
    }
    let eu = expected_utility(mdp, policy)?;
    if eta == 0.0 {
        return Ok(eu);
    }
    Ok(eu - eta * expected_kl(mdp, policy, reference)?)
}

/// Expected utility with the prompt distribution restricted to `prompts`
/// (uniform over them).
pub fn expected_utility_on(mdp: &TabularMdp, policy: &Policy, prompts: &[usize]) -> Result<f64> {
    if prompts.is_empty() {
        return Err(CoreError::EmptyData(
            "validation prompt set is empty".into(),
        ));
    }
    let mut w = vec![0.0; mdp.tree().num_prompts()];
    for &x in prompts {
        if x >= w.len() {
            return Err(CoreError::Structural(format!("prompt {x} does not exist")));
        }
        w[x] += 1.0;
    }
    expected_utility(&mdp.with_prompt_weights(&w)?, policy)
}

/// Every positive-probability trajectory with its probability.
pub fn enumerate_trajectories(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<(Trajectory, f64)>> {
    let tree = mdp.tree();
    let reach = reach_probabilities(mdp, policy)?;
    let mut out = Vec::new();
    for sa in tree.terminal_sa() {
        let p = reach[tree.state_of_sa(sa).0] * policy.prob(sa);
        if p > 0.0 {
            out.push((Trajectory::from_terminal_sa(tree, sa)?, p));
        }
    }
    Ok(out)
}

/// Every trajectory the kernel allows, regardless of policy.
pub fn all_trajectories(mdp: &TabularMdp) -> Result<Vec<Trajectory>> {
    let tree = mdp.tree();
    let uniform = Policy::uniform(tree);
    let reach = reach_probabilities(mdp, &uniform)?;
    tree.terminal_sa()
        .filter(|&sa| reach[tree.state_of_sa(sa).0] > 0.0)
        .map(|sa| Trajectory::from_terminal_sa(tree, sa))
        .collect()
}

/// KL-regularized value tables of a fixed policy:
/// `Q^π_H = u`, `Q^π_h = E_o[V^π_{h+1}]`, `V^π_h = E_π[Q^π_h] − η KL(π_h ‖ ref_h)`.
pub fn policy_value_tables(
    mdp: &TabularMdp,
    policy: &Policy,
    reference: &Policy,
    eta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tree = mdp.tree();
    policy.check_covers(tree)?;
    reference.check_covers(tree)?;
    let mut q = vec![0.0; tree.num_sa()];
    let mut v = vec![0.0; tree.num_states()];
    for i in (0..tree.num_states()).rev() {
        let s = StateId(i);
        let mut acc = 0.0;
        for sa in tree.sa_range(s) {
            q[sa] = if tree.is_terminal(s) {
                mdp.utility(sa)
            } else {
                mdp.kernel_row(sa)
                    .iter()
                    .enumerate()
                    .map(|(o, p)| p * v[tree.child(sa, o).0])
                    .sum()
            };
            acc += policy.prob(sa) * q[sa];
        }
        v[i] = acc - eta * kl_from_logs(policy.row_log_probs(s), reference.row_log_probs(s));
    }
    Ok((q, v))
}
