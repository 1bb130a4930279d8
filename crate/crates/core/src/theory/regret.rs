use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::env::{exact_expected_value, sample_from_prompt, Policy, TabularMdp, Trajectory};
use crate::error::{CoreError, Result};
use crate::math::{sample_categorical, sigmoid};
use crate::planner::solve_kl_regularized;
use crate::preference::PreferenceRecord;

use super::class::ModelClass;
use super::explore::{exploration_candidates, theoretical_exploration_policy, UncertaintyContext};
use super::mle::{confidence_sets, mle_reward, mle_transition};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryConfig {
    pub rounds: usize,
    pub eta: f64,
    /// Pairs collected per round.
    pub m: usize,
    pub c1: f64,
    pub delta: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            rounds: 50,
            eta: 0.1,
            m: 1,
            c1: 1.0,
            delta: 0.1,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(CoreError::Config("rounds must be >= 1".into()));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(CoreError::Config(format!(
                "eta must be finite and > 0, got {}",
                self.eta
            )));
        }
        if self.m == 0 {
            return Err(CoreError::Config("m must be >= 1".into()));
        }
        if !(self.c1 > 0.0) {
            return Err(CoreError::Config(format!(
                "c1 must be > 0, got {}",
                self.c1
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(CoreError::Config(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretRow {
    pub round: usize,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    #[serde(rename = "J_main")]
    pub j_main: f64,
    pub regret_cum: f64,
    pub uncertainty_score: f64,
    pub mle_u_index: usize,
    pub mle_p_index: usize,
    pub truth_in_u: bool,
    pub truth_in_p: bool,
}

/// Per-round record of the theoretical loop.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegretLedger {
    pub rows: Vec<RegretRow>,
}

impl RegretLedger {
    pub fn cumulative_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.regret_cum)
    }

    /// `Reg(t) / t` for the first `t` rounds.
    pub fn average_regret(&self, t: usize) -> Option<f64> {
        if t == 0 || t > self.rows.len() {
            return None;
        }
        Some(self.rows[t - 1].regret_cum / t as f64)
    }

    /// Per-round instantaneous regret `J(π*) − J(π¹_t)`.
    pub fn instantaneous(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.j_star - r.j_main).collect()
    }

    /// Fraction of rounds whose confidence sets held both true candidates.
    pub fn coverage(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.rows
            .iter()
            .filter(|r| r.truth_in_u && r.truth_in_p)
            .count() as f64
            / self.rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the theoretical loop against `truth`, learning over `class`.
///
/// Each round fits both MLEs on earlier data, plans on `(û, P̂)` around
/// `reference` to get the main policy, picks the exploration policy by the
/// uncertainty argmax and collects `m` pairs with Bradley-Terry labels.
pub fn run_theoretical_loop<R: Rng + ?Sized>(
    truth: &TabularMdp,
    class: &ModelClass,
    reference: &Policy,
    config: &TheoryConfig,
    rng: &mut R,
) -> Result<RegretLedger> {
    config.validate()?;
    if !class.skeleton().tree().same_shape(truth.tree()) {
        return Err(CoreError::Structural(
            "model class and environment trees differ".into(),
        ));
    }
    let eta = config.eta;
    let j_star = {
        let plan = solve_kl_regularized(truth, reference, eta)?;
        exact_expected_value(truth, plan.optimal_policy(), reference, eta)?
    };
    let mut records: Vec<PreferenceRecord> = Vec::new();
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut ledger = RegretLedger::default();
    let mut regret = 0.0;
    for round in 1..=config.rounds {
        let reward = mle_reward(&records, class);
        let transition = mle_transition(&trajectories, class);
        let (u_set, p_set) =
            confidence_sets(&reward, &transition, config.c1, config.rounds, config.delta)?;
        let plan = solve_kl_regularized(
            &class.model(reward.index, transition.index)?,
            reference,
            eta,
        )?;
        let main = plan.optimal_policy().clone();
        let j_main = exact_expected_value(truth, &main, reference, eta)?;
        regret += j_star - j_main;

        let ctx = UncertaintyContext {
            class,
            utility_set: &u_set,
            kernel_set: &p_set,
            utility_hat: reward.index,
            kernel_hat: transition.index,
            v_hat: plan.v_table(),
        };
        let candidates = exploration_candidates(&ctx, reference, eta, &main)?;
        let explore = theoretical_exploration_policy(&ctx, &main, &candidates)?;

        for _ in 0..config.m {
            let x = sample_categorical(truth.prompt_distribution(), rng);
            let t1 = sample_from_prompt(truth, &main, x, rng)?;
            let t2 = sample_from_prompt(truth, &explore.policy, x, rng)?;
            let tree = truth.tree();
            let p =
                sigmoid(truth.utility(t1.terminal_sa(tree)) - truth.utility(t2.terminal_sa(tree)));
            let z = rng.random::<f64>() < p;
            trajectories.push(t1.clone());
            trajectories.push(t2.clone());
            records.push(PreferenceRecord::new(t1, t2, z)?);
        }

        ledger.rows.push(RegretRow {
            round,
            j_star,
            j_main,
            regret_cum: regret,
            uncertainty_score: explore.score,
            mle_u_index: reward.index,
            mle_p_index: transition.index,
            truth_in_u: class.truth_utility().is_none_or(|i| u_set.contains(&i)),
            truth_in_p: class.truth_kernel().is_none_or(|i| p_set.contains(&i)),
        });
    }
    Ok(ledger)
}
