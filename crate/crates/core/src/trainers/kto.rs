use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{sample_from_prompt, Policy, StateId, TabularMdp};
use crate::error::{CoreError, Result};
use crate::math::{kl_from_logs, sigmoid};
use crate::trainers::data::chunked;
use crate::trainers::{
    check_reference, path_log_prob, path_log_ratio, require_obs_predictors, Evaluation,
    GradAccumulator, LabeledData, Objective, TrainerConfig,
};

/// Multi-turn KTO with implicit reward `u_θ = η Σ_h log ratio` and a detached
/// reference point `z0` re-estimated from fresh samples at every evaluation.
#[derive(Clone, Debug)]
pub struct KtoObjective {
    mdp: TabularMdp,
    data: LabeledData,
    reference: Policy,
    eta: f64,
    kappa: f64,
    lambda_plus: f64,
    lambda_minus: f64,
    mask: bool,
    z0_samples: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    fixed_z0: Option<f64>,
}

impl KtoObjective {
    pub fn new(
        mdp: &TabularMdp,
        data: LabeledData,
        reference: Policy,
        config: &TrainerConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        check_reference(&reference, &data.cache, config.mask_observations)?;
        Ok(KtoObjective {
            mdp: mdp.clone(),
            data,
            reference,
            eta: config.eta,
            kappa: if config.outer_eta_in_kto {
                config.eta
            } else {
                1.0
            },
            lambda_plus: config.lambda_plus,
            lambda_minus: config.lambda_minus,
            mask: config.mask_observations,
            z0_samples: config.z0_samples,
            batch_size: config.batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fixed_z0: None,
        })
    }

    /// Freezes the reference point, e.g. for finite-difference checks.
    pub fn with_fixed_z0(mut self, z0: f64) -> Self {
        self.fixed_z0 = Some(z0);
        self
    }

    /// Monte-Carlo estimate of `E[Σ_h KL(π_θ,h ‖ ref_h)]` over dataset prompts,
    /// with exact per-state KL along sampled trajectories.
    pub fn estimate_z0(&mut self, policy: &Policy) -> Result<f64> {
        let tree = self.mdp.tree().clone();
        let mut total = 0.0;
        for _ in 0..self.z0_samples {
            let x = self.data.prompts[self.rng.random_range(0..self.data.prompts.len())];
            let traj = sample_from_prompt(&self.mdp, policy, x, &mut self.rng)?;
            for (h, &s) in traj.states().iter().enumerate() {
                total += state_kl(policy, &self.reference, s);
                if !self.mask && h + 1 < traj.states().len() {
                    let sa = tree.sa_slot(s, traj.actions()[h]);
                    let r = tree.obs_range(sa);
                    total += kl_from_logs(
                        &policy.obs_log_probs().unwrap()[r.clone()],
                        &self.reference.obs_log_probs().unwrap()[r],
                    );
                }
            }
        }
        Ok(total / self.z0_samples as f64)
    }

    /// Loss and gradient at a given reference point.
    pub fn evaluate_at(&self, policy: &Policy, z0: f64) -> Result<Evaluation> {
        policy.check_covers(self.reference.tree())?;
        if !self.mask {
            require_obs_predictors(policy, &self.reference)?;
        }
        let cache = &self.data.cache;
        let total = self.data.total;
        let mut acc = GradAccumulator::new(policy, !self.mask);
        let mut loss = 0.0;
        let (mut lw, mut nw, mut ll, mut nl) = (0.0, 0.0, 0.0, 0.0);
        for chunk in chunked(&self.data.items, self.batch_size) {
            let mut part = 0.0;
            for &(k, desirable, count) in chunk {
                let path = cache.get(k);
                let u = self.eta * path_log_ratio(policy, &self.reference, path, self.mask);
                let logp = path_log_prob(policy, path);
                // d loss / d u_θ, then chain through u_θ = η Σ log ratio
                let dl_du = if desirable {
                    let s = sigmoid(self.kappa * (u - z0));
                    part += count * (self.lambda_plus - self.lambda_plus * s);
                    lw += count * logp;
                    nw += count;
                    -self.lambda_plus * self.kappa * s * (1.0 - s)
                } else {
                    let s = sigmoid(self.kappa * (z0 - u));
                    part += count * (self.lambda_minus - self.lambda_minus * s);
                    ll += count * logp;
                    nl += count;
                    self.lambda_minus * self.kappa * s * (1.0 - s)
                };
                acc.add_path(policy, path, dl_du * self.eta * count / total);
            }
            loss += part;
        }
        Ok(Evaluation {
            loss: loss / total,
            gradient: acc.finish(policy),
            mean_logp_winner: if nw > 0.0 { lw / nw } else { f64::NAN },
            mean_logp_loser: if nl > 0.0 { ll / nl } else { f64::NAN },
            z0: Some(z0),
        })
    }
}

fn state_kl(policy: &Policy, reference: &Policy, s: StateId) -> f64 {
    kl_from_logs(policy.row_log_probs(s), reference.row_log_probs(s))
}

impl Objective for KtoObjective {
    fn evaluate(&mut self, policy: &Policy) -> Result<Evaluation> {
        let z0 = match self.fixed_z0 {
            Some(z) => z,
            None => self.estimate_z0(policy)?,
        };
        self.evaluate_at(policy, z0)
    }
}

pub fn m_kto_loss_and_grad<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    reference: &Policy,
    labeled: &[(crate::env::Trajectory, bool)],
    config: &TrainerConfig,
    rng: &mut R,
) -> Result<Evaluation> {
    let config = TrainerConfig {
        mask_observations: true,
        ..config.clone()
    };
    kto_once(mdp, policy, reference, labeled, &config, rng)
}

pub fn single_turn_kto_loss_and_grad<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    reference: &Policy,
    labeled: &[(crate::env::Trajectory, bool)],
    config: &TrainerConfig,
    rng: &mut R,
) -> Result<Evaluation> {
    require_obs_predictors(policy, reference)?;
    let config = TrainerConfig {
        mask_observations: false,
        ..config.clone()
    };
    kto_once(mdp, policy, reference, labeled, &config, rng)
}

fn kto_once<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    reference: &Policy,
    labeled: &[(crate::env::Trajectory, bool)],
    config: &TrainerConfig,
    rng: &mut R,
) -> Result<Evaluation> {
    if labeled.is_empty() {
        return Err(CoreError::EmptyData(
            "KTO dataset has no desirable or undesirable examples".into(),
        ));
    }
    let data = LabeledData::new(mdp.tree(), labeled)?;
    KtoObjective::new(mdp, data, reference.clone(), config, rng.random())?.evaluate(policy)
}
