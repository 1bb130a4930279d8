use crate::env::{Policy, Trajectory};
use crate::error::{CoreError, Result};
use crate::trainers::data::chunked;
use crate::trainers::{
    path_log_prob, train, Evaluation, GradAccumulator, Objective, PathCache, TrainOutcome,
    TrainerConfig,
};

/// Mean negative action log-likelihood of a trajectory set.
#[derive(Clone, Debug)]
pub struct NllObjective {
    cache: PathCache,
    items: Vec<(usize, f64)>,
    total: f64,
    batch_size: usize,
}

impl NllObjective {
    pub fn new(policy: &Policy, winners: &[Trajectory], batch_size: usize) -> Result<Self> {
        if winners.is_empty() {
            return Err(CoreError::EmptyData(
                "no winning trajectories to imitate".into(),
            ));
        }
        let tree = policy.tree();
        let mut cache = PathCache::default();
        let mut counts = std::collections::BTreeMap::<usize, f64>::new();
        for t in winners {
            *counts.entry(cache.insert(tree, t)).or_default() += 1.0;
        }
        Ok(NllObjective {
            cache,
            items: counts.into_iter().collect(),
            total: winners.len() as f64,
            batch_size,
        })
    }
}

impl Objective for NllObjective {
    fn evaluate(&mut self, policy: &Policy) -> Result<Evaluation> {
        let mut acc = GradAccumulator::new(policy, false);
        let mut loss = 0.0;
        for chunk in chunked(&self.items, self.batch_size) {
            let mut part = 0.0;
            for &(k, count) in chunk {
                let path = self.cache.get(k);
                part -= count * path_log_prob(policy, path);
                acc.add_path(policy, path, -count / self.total);
            }
            loss += part;
        }
        let loss = loss / self.total;
        Ok(Evaluation {
            loss,
            gradient: acc.finish(policy),
            mean_logp_winner: -loss,
            mean_logp_loser: f64::NAN,
            z0: None,
        })
    }
}

/// Reward-ranked fine-tuning: gradient descent on the winners' action NLL.
/// Observation predictors, if any, are left untouched.
pub fn raft_update(
    policy: &Policy,
    winners: &[Trajectory],
    config: &TrainerConfig,
) -> Result<TrainOutcome> {
    let mut objective = NllObjective::new(policy, winners, config.batch_size)?;
    train(&mut objective, policy, config)
}
