use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::tree::{StateId, TreeIndex};
use crate::error::{CoreError, Result};
use crate::math::log_softmax_into;

/// Tabular softmax policy over the action slots of a tree, optionally with a
/// learned observation predictor (used only by the unmasked baselines).
///
/// Log-probabilities are cached at construction; policies are immutable, and
/// training produces a new policy per step.
#[derive(Clone, Debug)]
pub struct Policy {
    tree: Arc<TreeIndex>,
    logits: Vec<f64>,
    log_probs: Vec<f64>,
    obs_logits: Option<Vec<f64>>,
    obs_log_probs: Option<Vec<f64>>,
}

impl PartialEq for Policy {
    fn eq(&self, other: &Self) -> bool {
        self.logits == other.logits && self.obs_logits == other.obs_logits
    }
}

fn row_log_softmax(tree: &TreeIndex, logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for i in 0..tree.num_states() {
        let r = tree.sa_range(StateId(i));
        log_softmax_into(&logits[r.clone()], &mut out[r]);
    }
    out
}

fn obs_log_softmax(tree: &TreeIndex, logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for sa in 0..tree.num_sa() {
        let r = tree.obs_range(sa);
        if !r.is_empty() {
            log_softmax_into(&logits[r.clone()], &mut out[r]);
        }
    }
    out
}

impl Policy {
    pub fn uniform(tree: &Arc<TreeIndex>) -> Self {
        Self::from_logits(tree, vec![0.0; tree.num_sa()]).expect("zero logits are valid")
    }

    pub fn from_logits(tree: &Arc<TreeIndex>, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != tree.num_sa() {
            return Err(CoreError::Structural(format!(
                "policy has {} logits, environment has {} state-action slots",
                logits.len(),
                tree.num_sa()
            )));
        }
        if let Some(i) = logits
            .iter()
            .position(|l| l.is_nan() || *l == f64::INFINITY)
        {
            return Err(CoreError::Domain(format!("invalid logit at slot {i}")));
        }
        let log_probs = row_log_softmax(tree, &logits);
        Ok(Policy {
            tree: Arc::clone(tree),
            logits,
            log_probs,
            obs_logits: None,
            obs_log_probs: None,
        })
    }

    /// Policy from per-slot probabilities (rows need not be normalized).
    pub fn from_probs(tree: &Arc<TreeIndex>, probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(CoreError::Domain(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        Self::from_logits(tree, probs.iter().map(|p| p.ln()).collect())
    }

    /// Attaches an observation predictor with the given logits (one per sao slot).
    pub fn with_obs_logits(mut self, obs_logits: Vec<f64>) -> Result<Self> {
        if obs_logits.len() != self.tree.num_sao() {
            return Err(CoreError::Structural(format!(
                "observation predictor has {} logits, environment has {} observation slots",
                obs_logits.len(),
                self.tree.num_sao()
            )));
        }
        if obs_logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(CoreError::Domain("invalid observation logit".into()));
        }
        self.obs_log_probs = Some(obs_log_softmax(&self.tree, &obs_logits));
        self.obs_logits = Some(obs_logits);
        Ok(self)
    }

    pub fn with_uniform_obs_predictor(self) -> Self {
        let n = self.tree.num_sao();
        self.with_obs_logits(vec![0.0; n])
            .expect("zero logits are valid")
    }

    pub fn without_obs_predictor(mut self) -> Self {
        self.obs_logits = None;
        self.obs_log_probs = None;
        self
    }

    pub fn tree(&self) -> &Arc<TreeIndex> {
        &self.tree
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn obs_logits(&self) -> Option<&[f64]> {
        self.obs_logits.as_deref()
    }

    pub fn has_obs_predictor(&self) -> bool {
        self.obs_logits.is_some()
    }

    pub fn log_prob(&self, sa: usize) -> f64 {
        self.log_probs[sa]
    }

    pub fn prob(&self, sa: usize) -> f64 {
        self.log_probs[sa].exp()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn row_log_probs(&self, s: StateId) -> &[f64] {
        &self.log_probs[self.tree.sa_range(s)]
    }

    pub fn row_probs(&self, s: StateId) -> Vec<f64> {
        self.row_log_probs(s).iter().map(|l| l.exp()).collect()
    }

    /// Log-probability of the predicted observation at an sao slot.
    pub fn obs_log_prob(&self, sao: usize) -> Option<f64> {
        self.obs_log_probs.as_ref().map(|v| v[sao])
    }

    pub fn obs_log_probs(&self) -> Option<&[f64]> {
        self.obs_log_probs.as_deref()
    }

    /// Checks the policy was built for `tree`.
    pub fn check_covers(&self, tree: &TreeIndex) -> Result<()> {
        if !self.tree.same_shape(tree) {
            return Err(CoreError::Structural(format!(
                "policy covers {} states, environment has {}",
                self.tree.num_states(),
                tree.num_states()
            )));
        }
        Ok(())
    }

    /// Row-wise logits divided by `temperature`.
    pub fn scaled(&self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(CoreError::Domain(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let logits = self.logits.iter().map(|l| l / temperature).collect();
        let mut out = Policy::from_logits(&self.tree, logits)?;
        if let Some(obs) = &self.obs_logits {
            out = out.with_obs_logits(obs.clone())?;
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            logits: self.logits.clone(),
            obs_logits: self.obs_logits.clone(),
        }
    }

    pub fn from_checkpoint(tree: &Arc<TreeIndex>, ck: &PolicyCheckpoint) -> Result<Self> {
        let p = Policy::from_logits(tree, ck.logits.clone())?;
        match &ck.obs_logits {
            Some(obs) => p.with_obs_logits(obs.clone()),
            None => Ok(p),
        }
    }
}

/// Serializable logit tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub logits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_logits: Option<Vec<f64>>,
}

impl PolicyCheckpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tree::TreeShape;

    fn tree() -> Arc<TreeIndex> {
        Arc::new(
            TreeIndex::build(&TreeShape {
                horizon: 2,
                num_prompts: 1,
                actions_per_state: 3,
                obs_per_step: 2,
                halt: false,
            })
            .unwrap(),
        )
    }

    #[test]
    fn rows_normalize() {
        let t = tree();
        let logits: Vec<f64> = (0..t.num_sa())
            .map(|i| (i as f64 * 0.37).sin() * 5.0)
            .collect();
        let p = Policy::from_logits(&t, logits)
            .unwrap()
            .with_uniform_obs_predictor();
        for i in 0..t.num_states() {
            let row = p.row_probs(StateId(i));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x > 0.0));
        }
        for sa in 0..t.num_sa() {
            let r = t.obs_range(sa);
            if r.is_empty() {
                continue;
            }
            let s: f64 = r.map(|sao| p.obs_log_prob(sao).unwrap().exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let t = tree();
        let logits: Vec<f64> = (0..t.num_sa())
            .map(|i| 1.0 / (i as f64 + 3.0) - 0.1 * i as f64)
            .collect();
        let p = Policy::from_logits(&t, logits).unwrap();
        let text = p.checkpoint().to_json().unwrap();
        let back =
            Policy::from_checkpoint(&t, &PolicyCheckpoint::from_json(&text).unwrap()).unwrap();
        for (a, b) in p.logits().iter().zip(back.logits()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_size_is_structural() {
        let t = tree();
        assert!(matches!(
            Policy::from_logits(&t, vec![0.0; 2]),
            Err(CoreError::Structural(_))
        ));
    }
}
