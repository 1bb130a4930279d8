use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    /// KL coefficient η.
    pub eta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Chunk size for loss evaluation; 0 means the whole dataset at once.
    /// Descent is always full batch, chunks only change the summation grouping.
    pub batch_size: usize,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub nll_weight: f64,
    pub mask_observations: bool,
    /// Apply η a second time inside the KTO sigmoid, as the objective is written.
    pub outer_eta_in_kto: bool,
    /// Samples used to estimate the KTO reference point per step.
    pub z0_samples: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            eta: 0.1,
            learning_rate: 1.0,
            steps: 200,
            batch_size: 0,
            lambda_plus: 1.0,
            lambda_minus: 1.0,
            nll_weight: 0.0,
            mask_observations: true,
            outer_eta_in_kto: true,
            z0_samples: 32,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("learning_rate", self.learning_rate),
            ("lambda_plus", self.lambda_plus),
            ("lambda_minus", self.lambda_minus),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.nll_weight >= 0.0) || !self.nll_weight.is_finite() {
            return Err(CoreError::Config(format!(
                "nll_weight must be >= 0, got {}",
                self.nll_weight
            )));
        }
        if self.steps == 0 {
            return Err(CoreError::Config("steps must be >= 1".into()));
        }
        if self.z0_samples == 0 {
            return Err(CoreError::Config("z0_samples must be >= 1".into()));
        }
        Ok(())
    }
}
