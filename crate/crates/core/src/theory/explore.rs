use crate::env::{expected_table, reach_probabilities, Policy, StateId, TabularMdp};
use crate::error::{CoreError, Result};
use crate::math::argmax_first;
use crate::planner::solve_kl_regularized;

use super::class::ModelClass;

/// The chosen exploration policy and the objective value of every candidate.
#[derive(Clone, Debug)]
pub struct ExplorationChoice {
    pub index: usize,
    pub policy: Policy,
    pub score: f64,
    pub scores: Vec<f64>,
}

/// Current estimates and confidence sets seen by the exploration step.
#[derive(Clone, Copy, Debug)]
pub struct UncertaintyContext<'a> {
    pub class: &'a ModelClass,
    pub utility_set: &'a [usize],
    pub kernel_set: &'a [usize],
    pub utility_hat: usize,
    pub kernel_hat: usize,
    /// State values of the plan on `(û, P̂)`.
    pub v_hat: &'a [f64],
}

/// Reward part of the objective for one `(ũ, P̃)`:
/// `E_{π,P̃}[ũ − û] − E_{π¹,P̃}[ũ − û]`.
pub fn reward_uncertainty(
    model: &TabularMdp,
    policy: &Policy,
    main: &Policy,
    u_tilde: &[f64],
    u_hat: &[f64],
) -> Result<f64> {
    let diff: Vec<f64> = u_tilde.iter().zip(u_hat).map(|(a, b)| a - b).collect();
    Ok(expected_table(model, policy, &diff)? - expected_table(model, main, &diff)?)
}

/// Transition part for one `P̃`:
/// `Σ_h E_{π,P̃}[V̂_{h+1}(s_{h+1}) − (P̂ V̂_{h+1})(s_h, a_h)]`.
pub fn transition_uncertainty(
    model: &TabularMdp,
    policy: &Policy,
    p_hat: &[f64],
    v_hat: &[f64],
) -> Result<f64> {
    let tree = model.tree();
    let reach = reach_probabilities(model, policy)?;
    let mut total = 0.0;
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
            let mut gap = 0.0;
            for (o, sao) in tree.obs_range(sa).enumerate() {
                gap += (model.kernel()[sao] - p_hat[sao]) * v_hat[tree.child(sa, o).0];
            }
            total += pa * gap;
        }
    }
    Ok(total)
}

/// Gibbs policy of every `(u, P)` in the confidence product, then `main`,
/// then uniform.
pub fn exploration_candidates(
    ctx: &UncertaintyContext<'_>,
    reference: &Policy,
    eta: f64,
    main: &Policy,
) -> Result<Vec<Policy>> {
    let mut out = Vec::with_capacity(ctx.utility_set.len() * ctx.kernel_set.len() + 2);
    for &u in ctx.utility_set {
        for &p in ctx.kernel_set {
            let model = ctx.class.model(u, p)?;
            out.push(solve_kl_regularized(&model, reference, eta)?.into_policy());
        }
    }
    out.push(main.clone());
    out.push(Policy::uniform(ctx.class.skeleton().tree()));
    Ok(out)
}

/// Objective value of `policy`: max over `(ũ, P̃)` in the confidence sets of
/// the reward term plus the transition term.
pub fn exploration_score(
    ctx: &UncertaintyContext<'_>,
    policy: &Policy,
    main: &Policy,
) -> Result<f64> {
    let class = ctx.class;
    let u_hat = class.utility(ctx.utility_hat);
    let p_hat = class.kernel(ctx.kernel_hat);
    let mut best = f64::NEG_INFINITY;
    for &p in ctx.kernel_set {
        let model = class.kernel_model(p);
        let transition = transition_uncertainty(model, policy, p_hat, ctx.v_hat)?;
        for &u in ctx.utility_set {
            let reward = reward_uncertainty(model, policy, main, class.utility(u), u_hat)?;
            best = best.max(reward + transition);
        }
    }
    Ok(best)
}

/// Exact argmax of the uncertainty objective over `candidates`; ties go to
/// the lowest index.
pub fn theoretical_exploration_policy(
    ctx: &UncertaintyContext<'_>,
    main: &Policy,
    candidates: &[Policy],
) -> Result<ExplorationChoice> {
    if candidates.is_empty() {
        return Err(CoreError::Config(
            "exploration candidate set is empty".into(),
        ));
    }
    assert!(
        !ctx.utility_set.is_empty() && !ctx.kernel_set.is_empty(),
        "confidence sets always contain the MLE"
    );
    let scores = candidates
        .iter()
        .map(|pi| exploration_score(ctx, pi, main))
        .collect::<Result<Vec<_>>>()?;
    let index = argmax_first(&scores).unwrap_or(0);
    Ok(ExplorationChoice {
        index,
        policy: candidates[index].clone(),
        score: scores[index],
        scores,
    })
}
