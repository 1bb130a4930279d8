use std::io::Write;

use serde::Serialize;

use crate::env::Policy;
use crate::error::{CoreError, Result};
use crate::trainers::{Objective, TrainerConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub mean_logp_winner: f64,
    pub mean_logp_loser: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: Policy,
    /// Loss before each update.
    pub trace: Vec<TraceRow>,
}

/// Full-batch gradient descent with a fixed step size on action logits (and
/// observation logits when the objective differentiates them).
pub fn gradient_descent(
    objective: &mut dyn Objective,
    init: &Policy,
    learning_rate: f64,
    steps: usize,
) -> Result<TrainOutcome> {
    if steps == 0 {
        return Err(CoreError::Config("steps must be >= 1".into()));
    }
    if !(learning_rate >= 0.0) {
        return Err(CoreError::Config(format!(
            "learning rate must be >= 0, got {learning_rate}"
        )));
    }
    let tree = init.tree().clone();
    let mut policy = init.clone();
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let ev = objective.evaluate(&policy)?;
        if !ev.loss.is_finite() {
            return Err(CoreError::Diverged {
                step,
                loss: ev.loss,
            });
        }
        trace.push(TraceRow {
            step,
            loss: ev.loss,
            mean_logp_winner: ev.mean_logp_winner,
            mean_logp_loser: ev.mean_logp_loser,
        });
        if learning_rate == 0.0 {
            continue;
        }
        let logits: Vec<f64> = policy
            .logits()
            .iter()
            .zip(&ev.gradient.action)
            .map(|(l, g)| l - learning_rate * g)
            .collect();
        let obs_logits = match (policy.obs_logits(), &ev.gradient.observation) {
            (Some(o), Some(g)) => Some(
                o.iter()
                    .zip(g)
                    .map(|(l, g)| l - learning_rate * g)
                    .collect(),
            ),
            (Some(o), None) => Some(o.to_vec()),
            (None, _) => None,
        };
        policy = Policy::from_logits(&tree, logits)?;
        if let Some(o) = obs_logits {
            policy = policy.with_obs_logits(o)?;
        }
    }
    Ok(TrainOutcome { policy, trace })
}

/// [`gradient_descent`] with the step size and step count of a validated config.
pub fn train(
    objective: &mut dyn Objective,
    init: &Policy,
    config: &TrainerConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    gradient_descent(objective, init, config.learning_rate, config.steps)
}

/// CSV with columns `step,loss,mean_logp_winner,mean_logp_loser`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
