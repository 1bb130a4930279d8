use crate::env::Policy;
use crate::error::Result;
use crate::math::{sigmoid, softplus};
use crate::preference::PreferenceRecord;
use crate::trainers::data::chunked;
use crate::trainers::{
    check_reference, path_log_prob, path_log_ratio, require_obs_predictors, Evaluation,
    GradAccumulator, Objective, PairData, TrainerConfig,
};

/// `mean −log σ(η (r_w − r_l)) + nll_weight · mean(−log π(τ_w))` where `r` is
/// the summed log-ratio, over actions only when masked.
#[derive(Clone, Debug)]
pub struct DpoObjective {
    data: PairData,
    reference: Policy,
    eta: f64,
    mask: bool,
    nll_weight: f64,
    batch_size: usize,
}

impl DpoObjective {
    pub fn new(data: PairData, reference: Policy, config: &TrainerConfig) -> Result<Self> {
        config.validate()?;
        check_reference(&reference, &data.cache, config.mask_observations)?;
        Ok(DpoObjective {
            data,
            reference,
            eta: config.eta,
            mask: config.mask_observations,
            nll_weight: config.nll_weight,
            batch_size: config.batch_size,
        })
    }

    pub fn from_records(
        records: &[PreferenceRecord],
        reference: Policy,
        config: &TrainerConfig,
    ) -> Result<Self> {
        let data = PairData::from_records(reference.tree(), records)?;
        Self::new(data, reference, config)
    }
}

impl Objective for DpoObjective {
    fn evaluate(&mut self, policy: &Policy) -> Result<Evaluation> {
        policy.check_covers(self.reference.tree())?;
        if !self.mask {
            require_obs_predictors(policy, &self.reference)?;
        }
        let cache = &self.data.cache;
        let total = self.data.total;
        let mut acc = GradAccumulator::new(policy, !self.mask);
        let (mut loss, mut lw, mut ll) = (0.0, 0.0, 0.0);
        for chunk in chunked(&self.data.pairs, self.batch_size) {
            let (mut part, mut part_w, mut part_l) = (0.0, 0.0, 0.0);
            for &(w, l, count) in chunk {
                let (pw, pl) = (cache.get(w), cache.get(l));
                let margin = self.eta
                    * (path_log_ratio(policy, &self.reference, pw, self.mask)
                        - path_log_ratio(policy, &self.reference, pl, self.mask));
                let logp_w = path_log_prob(policy, pw);
                part += count * (softplus(-margin) - self.nll_weight * logp_w);
                part_w += count * logp_w;
                part_l += count * path_log_prob(policy, pl);
                // d softplus(−m)/dm = −σ(−m)
                let c = -sigmoid(-margin) * self.eta * count / total;
                acc.add_path(policy, pw, c);
                acc.add_path(policy, pl, -c);
                if self.nll_weight > 0.0 {
                    let nll: Vec<_> = pw.iter().map(|&(sa, _)| (sa, None)).collect();
                    acc.add_path(policy, &nll, -self.nll_weight * count / total);
                }
            }
            loss += part;
            lw += part_w;
            ll += part_l;
        }
        Ok(Evaluation {
            loss: loss / total,
            gradient: acc.finish(policy),
            mean_logp_winner: lw / total,
            mean_logp_loser: ll / total,
            z0: None,
        })
    }
}

/// M-DPO: observation terms masked regardless of `config.mask_observations`.
pub fn m_dpo_loss_and_grad(
    policy: &Policy,
    reference: &Policy,
    records: &[PreferenceRecord],
    config: &TrainerConfig,
) -> Result<Evaluation> {
    let config = TrainerConfig {
        mask_observations: true,
        nll_weight: 0.0,
        ..config.clone()
    };
    DpoObjective::from_records(records, reference.clone(), &config)?.evaluate(policy)
}

/// Single-turn DPO: observation terms of the learned predictor enter the log-ratios.
pub fn single_turn_dpo_loss_and_grad(
    policy: &Policy,
    reference: &Policy,
    records: &[PreferenceRecord],
    config: &TrainerConfig,
) -> Result<Evaluation> {
    require_obs_predictors(policy, reference)?;
    let config = TrainerConfig {
        mask_observations: false,
        nll_weight: 0.0,
        ..config.clone()
    };
    DpoObjective::from_records(records, reference.clone(), &config)?.evaluate(policy)
}

/// M-DPO plus `nll_weight` times the winners' mean negative log-likelihood.
pub fn nll_augmented_m_dpo(
    policy: &Policy,
    reference: &Policy,
    records: &[PreferenceRecord],
    config: &TrainerConfig,
) -> Result<Evaluation> {
    let config = TrainerConfig {
        mask_observations: true,
        ..config.clone()
    };
    DpoObjective::from_records(records, reference.clone(), &config)?.evaluate(policy)
}
