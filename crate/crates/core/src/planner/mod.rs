//! Exact KL-regularized backward induction (the policy improvement oracle)
//! and numerical audits built on it.

mod audit;
mod decomposition;
mod export;

pub use audit::{
    audit_optimality_condition, chebyshev_bound_check, ChebyshevReport, OptimalityTerms,
};
pub use decomposition::{value_decomposition, DecompositionTerms, ValueDecomposition};
pub use export::{PlanExport, StateExport};

use crate::env::{Policy, StateId, TabularMdp};
use crate::error::{CoreError, Result};
use crate::math::log_sum_exp;

/// Q/V tables, log-normalizers and the Gibbs policy for `(model, reference, η)`.
#[derive(Clone, Debug)]
pub struct PlanSolution {
    eta: f64,
    q: Vec<f64>,
    v: Vec<f64>,
    log_normalizer: Vec<f64>,
    policy: Policy,
}

impl PlanSolution {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `Q_h(s_h, a_h)` per sa slot.
    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    /// `V_h(s_h)` per state. `V_{H+1}` is identically zero and not stored.
    pub fn v_table(&self) -> &[f64] {
        &self.v
    }

    /// `log Z_h(s_h)` per state; `V_h = η log Z_h`.
    pub fn log_normalizers(&self) -> &[f64] {
        &self.log_normalizer
    }

    pub fn optimal_policy(&self) -> &Policy {
        &self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    /// `V_{h+1}` at the child reached by `(sa, observation)`; zero past the horizon.
    pub fn next_value(&self, mdp: &TabularMdp, sa: usize, observation: usize) -> f64 {
        let tree = mdp.tree();
        if tree.is_terminal(tree.state_of_sa(sa)) {
            0.0
        } else {
            self.v[tree.child(sa, observation).0]
        }
    }

    pub(crate) fn check_matches(&self, mdp: &TabularMdp, eta: f64) -> Result<()> {
        let tree = mdp.tree();
        if self.q.len() != tree.num_sa() || self.v.len() != tree.num_states() {
            return Err(CoreError::Structural(
                "plan tables do not match the environment".into(),
            ));
        }
        if self.eta != eta {
            return Err(CoreError::Structural(format!(
                "plan was solved with eta = {}, not {eta}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Solves the KL-regularized planning problem by backward induction:
/// `Q_H = u`, `Q_h = E_o[V_{h+1}]`, `π_h ∝ π_ref,h · exp(Q_h/η)`,
/// `V_h = η log Σ_a π_ref,h(a) exp(Q_h(a)/η)`.
pub fn solve_kl_regularized(
    mdp: &TabularMdp,
    reference: &Policy,
    eta: f64,
) -> Result<PlanSolution> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(CoreError::Domain(format!(
            "eta must be finite and > 0, got {eta}"
        )));
    }
    let tree = mdp.tree();
    reference.check_covers(tree)?;
    let mut q = vec![0.0; tree.num_sa()];
    let mut v = vec![0.0; tree.num_states()];
    let mut log_z = vec![0.0; tree.num_states()];
    let mut logits = vec![0.0; tree.num_sa()];
    for i in (0..tree.num_states()).rev() {
        let s = StateId(i);
        let range = tree.sa_range(s);
        for sa in range.clone() {
            let lr = reference.log_prob(sa);
            if lr == f64::NEG_INFINITY || lr.is_nan() {
                return Err(CoreError::Domain(format!(
                    "reference assigns zero probability to action {} at {s}",
                    tree.action_of_sa(sa)
                )));
            }
            q[sa] = if tree.is_terminal(s) {
                mdp.utility(sa)
            } else {
                mdp.kernel_row(sa)
                    .iter()
                    .enumerate()
                    .map(|(o, p)| p * v[tree.child(sa, o).0])
                    .sum()
            };
            logits[sa] = lr + q[sa] / eta;
        }
        log_z[i] = log_sum_exp(&logits[range]);
        v[i] = eta * log_z[i];
    }
    let policy = Policy::from_logits(tree, logits)?;
    Ok(PlanSolution {
        eta,
        q,
        v,
        log_normalizer: log_z,
        policy,
    })
}

/// Gibbs policy of arbitrary Q-tables: `π̂_h ∝ π_ref,h · exp(Q̂_h/η)`.
pub fn gibbs_policy(reference: &Policy, q: &[f64], eta: f64) -> Result<Policy> {
    if !(eta > 0.0) {
        return Err(CoreError::Domain(format!("eta must be > 0, got {eta}")));
    }
    let tree = reference.tree();
    if q.len() != tree.num_sa() {
        return Err(CoreError::Structural("Q-table size mismatch".into()));
    }
    let logits = q
        .iter()
        .enumerate()
        .map(|(sa, qv)| reference.log_prob(sa) + qv / eta)
        .collect();
    Policy::from_logits(tree, logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_environment, EnvSpec};

    #[test]
    fn rejects_bad_eta() {
        let mdp = build_environment(&EnvSpec::preset("tool_tree").unwrap()).unwrap();
        let r = Policy::uniform(mdp.tree());
        assert!(matches!(
            solve_kl_regularized(&mdp, &r, 0.0),
            Err(CoreError::Domain(_))
        ));
        assert!(matches!(
            solve_kl_regularized(&mdp, &r, -1.0),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn zero_reference_entry_is_domain_error() {
        let mdp = build_environment(&EnvSpec::preset("tool_tree").unwrap()).unwrap();
        let mut probs = vec![0.5; mdp.tree().num_sa()];
        probs[0] = 0.0;
        let r = Policy::from_probs(mdp.tree(), &probs).unwrap();
        let err = solve_kl_regularized(&mdp, &r, 1.0).unwrap_err();
        assert!(err.to_string().contains("s0"), "{err}");
    }

    #[test]
    fn zero_utility_returns_reference() {
        let mdp = build_environment(&EnvSpec::preset("random").unwrap()).unwrap();
        let mdp = mdp.with_utility(vec![0.0; mdp.tree().num_sa()]).unwrap();
        let logits: Vec<f64> = (0..mdp.tree().num_sa())
            .map(|i| (i % 3) as f64 * 0.4)
            .collect();
        let r = Policy::from_logits(mdp.tree(), logits).unwrap();
        let plan = solve_kl_regularized(&mdp, &r, 0.3).unwrap();
        assert!(plan.v_table().iter().all(|&v| v.abs() < 1e-15));
        for sa in 0..mdp.tree().num_sa() {
            assert!((plan.optimal_policy().prob(sa) - r.prob(sa)).abs() < 1e-15);
        }
    }
}
