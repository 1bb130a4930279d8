use crate::env::{
    exact_expected_value, per_state_kl, reach_probabilities, Policy, StateId, TabularMdp,
};
use crate::error::{CoreError, Result};
use crate::math::kl_from_logs;
use crate::planner::gibbs_policy;

/// The three sums on the right-hand side of the value decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionTerms {
    /// `E_π[u] − E_π̂[u]`.
    pub utility_difference: f64,
    /// `Σ_h E_π[V̂_{h+1} − Q̂_h] − Σ_h E_π̂[V̂_{h+1} − Q̂_h]`.
    pub bellman_residuals: f64,
    /// `−η Σ_h E_π[KL(π_h ‖ π̂_h)]`.
    pub kl_term: f64,
}

impl DecompositionTerms {
    pub fn sum(&self) -> f64 {
        self.utility_difference + self.bellman_residuals + self.kl_term
    }
}

#[derive(Clone, Debug)]
pub struct ValueDecomposition {
    /// `J(π) − J(π̂)`.
    pub lhs: f64,
    pub rhs: DecompositionTerms,
    /// The Gibbs policy of `Q̂`.
    pub induced_policy: Policy,
}

/// Evaluates both sides of the value decomposition for candidate Q-tables
/// `q_hat` and a comparator policy, by exact expectation on the true model.
pub fn value_decomposition(
    mdp: &TabularMdp,
    q_hat: &[f64],
    reference: &Policy,
    eta: f64,
    comparator: &Policy,
) -> Result<ValueDecomposition> {
    let tree = mdp.tree();
    if q_hat.len() != tree.num_sa() {
        return Err(CoreError::Structural("Q-hat table size mismatch".into()));
    }
    comparator.check_covers(tree)?;
    let induced = gibbs_policy(reference, q_hat, eta)?;

    // V̂_h = E_π̂[Q̂_h] − η KL(π̂_h ‖ π_ref,h)
    let v_hat: Vec<f64> = (0..tree.num_states())
        .map(|i| {
            let s = StateId(i);
            let eq: f64 = tree
                .sa_range(s)
                .map(|sa| induced.prob(sa) * q_hat[sa])
                .sum();
            eq - eta * kl_from_logs(induced.row_log_probs(s), reference.row_log_probs(s))
        })
        .collect();

    let lhs = exact_expected_value(mdp, comparator, reference, eta)?
        - exact_expected_value(mdp, &induced, reference, eta)?;

    let utility_difference = crate::env::expected_utility(mdp, comparator)?
        - crate::env::expected_utility(mdp, &induced)?;
    let bellman_residuals = bellman_residual_sum(mdp, comparator, q_hat, &v_hat)?
        - bellman_residual_sum(mdp, &induced, q_hat, &v_hat)?;
    let reach = reach_probabilities(mdp, comparator)?;
    let kl = per_state_kl(comparator, &induced)?;
    let kl_term = -eta
        * reach
            .iter()
            .zip(&kl)
            .map(|(r, k)| if *r == 0.0 { 0.0 } else { r * k })
            .sum::<f64>();

    Ok(ValueDecomposition {
        lhs,
        rhs: DecompositionTerms {
            utility_difference,
            bellman_residuals,
            kl_term,
        },
        induced_policy: induced,
    })
}

/// `Σ_h E_π[V̂_{h+1}(s_{h+1}) − Q̂_h(s_h, a_h)]` with `V̂_{H+1} = 0`.
fn bellman_residual_sum(
    mdp: &TabularMdp,
    policy: &Policy,
    q_hat: &[f64],
    v_hat: &[f64],
) -> Result<f64> {
    let tree = mdp.tree();
    let reach = reach_probabilities(mdp, policy)?;
    let mut total = 0.0;
    for i in 0..tree.num_states() {
        if reach[i] == 0.0 {
            continue;
        }
        let s = StateId(i);
        for sa in tree.sa_range(s) {
            let next: f64 = if tree.is_terminal(s) {
                0.0
            } else {
                mdp.kernel_row(sa)
                    .iter()
                    .enumerate()
                    .map(|(o, p)| p * v_hat[tree.child(sa, o).0])
                    .sum()
            };
            total += reach[i] * policy.prob(sa) * (next - q_hat[sa]);
        }
    }
    Ok(total)
}
