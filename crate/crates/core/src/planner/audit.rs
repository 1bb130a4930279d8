use rand::Rng;

use crate::env::{sample_trajectory, Policy, TabularMdp, Trajectory};
use crate::error::{CoreError, Result};
use crate::planner::PlanSolution;

/// Decomposition `u(s_H, a_H) = A + B + C` along one trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalityTerms {
    /// `η Σ_h log π*_h(a_h|s_h) / π_ref,h(a_h|s_h)`.
    pub term_a: f64,
    /// `V_1(s_1)`.
    pub term_b: f64,
    /// `Σ_{h<H} [V_{h+1}(s_{h+1}) − E_o V_{h+1}]`.
    pub term_c: f64,
    /// `u − (A + B + C)`.
    pub residual: f64,
}

/// Evaluates the optimality condition of a solved plan along `traj`.
pub fn audit_optimality_condition(
    mdp: &TabularMdp,
    plan: &PlanSolution,
    reference: &Policy,
    eta: f64,
    traj: &Trajectory,
) -> Result<OptimalityTerms> {
    plan.check_matches(mdp, eta)?;
    reference.check_covers(mdp.tree())?;
    let tree = mdp.tree();
    let policy = plan.optimal_policy();
    let slots = traj.sa_slots(tree);
    let term_a = eta
        * slots
            .iter()
            .map(|&sa| policy.log_prob(sa) - reference.log_prob(sa))
            .sum::<f64>();
    let term_b = plan.v_table()[traj.states()[0].0];
    let term_c = slots
        .iter()
        .zip(traj.observations())
        .map(|(&sa, &o)| value_innovation(mdp, plan, sa, o))
        .sum::<f64>();
    let u = mdp.utility(*slots.last().unwrap());
    Ok(OptimalityTerms {
        term_a,
        term_b,
        term_c,
        residual: u - (term_a + term_b + term_c),
    })
}

/// `V_{h+1}(s_{h+1}) − Σ_o P(o|s_h, a_h) V_{h+1}(child(o))`.
fn value_innovation(mdp: &TabularMdp, plan: &PlanSolution, sa: usize, observation: usize) -> f64 {
    let realized = plan.next_value(mdp, sa, observation);
    let expected: f64 = mdp
        .kernel_row(sa)
        .iter()
        .enumerate()
        .map(|(o, p)| p * plan.next_value(mdp, sa, o))
        .sum();
    realized - expected
}

/// Conditional variance of `V_{h+1}` given `(s_h, a_h)`.
fn value_variance(mdp: &TabularMdp, plan: &PlanSolution, sa: usize) -> f64 {
    let row = mdp.kernel_row(sa);
    let mean: f64 = row
        .iter()
        .enumerate()
        .map(|(o, p)| p * plan.next_value(mdp, sa, o))
        .sum();
    row.iter()
        .enumerate()
        .map(|(o, p)| {
            let d = plan.next_value(mdp, sa, o) - mean;
            p * d * d
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevReport {
    pub fraction_within_bound: f64,
    pub samples: usize,
    /// Set when the environment is deterministic and the bound holds trivially.
    pub diagnostic: Option<String>,
}

/// Absolute slack for `|C| ≤ 4·sqrt(Σ σ²)` when both sides are rounding noise.
const BOUND_SLACK: f64 = 1e-12;

/// Fraction of sampled trajectories with `|C| ≤ 4·sqrt(Σ_h σ_h²)`, where the
/// `σ_h²` are the exact conditional variances of `V_{h+1}` along the path.
pub fn chebyshev_bound_check<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    plan: &PlanSolution,
    policy: &Policy,
    num_samples: usize,
    rng: &mut R,
) -> Result<ChebyshevReport> {
    if num_samples < 100 {
        return Err(CoreError::Config(format!(
            "need at least 100 samples, got {num_samples}"
        )));
    }
    if plan.q_table().len() != mdp.tree().num_sa() {
        return Err(CoreError::Structural(
            "plan tables do not match the environment".into(),
        ));
    }
    if mdp.is_deterministic() {
        return Ok(ChebyshevReport {
            fraction_within_bound: 1.0,
            samples: 0,
            diagnostic: Some(
                "deterministic observations: term C vanishes and the bound is vacuous".into(),
            ),
        });
    }
    let tree = mdp.tree();
    let mut within = 0usize;
    for _ in 0..num_samples {
        let traj = sample_trajectory(mdp, policy, rng)?;
        let slots = traj.sa_slots(tree);
        let mut c = 0.0;
        let mut var = 0.0;
        for (&sa, &o) in slots.iter().zip(traj.observations()) {
            c += value_innovation(mdp, plan, sa, o);
            var += value_variance(mdp, plan, sa);
        }
        if c.abs() <= 4.0 * var.sqrt() + BOUND_SLACK {
            within += 1;
        }
    }
    Ok(ChebyshevReport {
        fraction_within_bound: within as f64 / num_samples as f64,
        samples: num_samples,
        diagnostic: None,
    })
}
