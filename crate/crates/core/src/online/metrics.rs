use std::io::Write;

use serde::Serialize;

use crate::error::Result;

pub const METRICS_HEADER: [&str; 11] = [
    "round",
    "trainer",
    "reference_mode",
    "eta",
    "pairs_collected",
    "coverage",
    "true_expected_utility",
    "kl_to_initial",
    "kl_to_previous",
    "dataset_size",
    "kl_target_value",
];

/// One row of the per-round metrics table. Round 0 describes the initial policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub trainer: String,
    pub reference_mode: String,
    pub eta: f64,
    pub pairs_collected: usize,
    /// Fraction of this round's prompts that yielded a usable pair.
    pub coverage: f64,
    /// `E[u*]` of the main policy (η = 0).
    pub true_expected_utility: f64,
    pub kl_to_initial: f64,
    pub kl_to_previous: f64,
    pub dataset_size: usize,
    /// `J` of the main policy under the KL-regularized target around `π₀`.
    pub kl_target_value: f64,
    #[serde(skip)]
    pub warning: Option<String>,
}

pub fn write_metrics_csv<W: Write>(rows: &[RoundMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
