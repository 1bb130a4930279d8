use serde::{Deserialize, Serialize};

use crate::env::{StateId, TabularMdp};
use crate::planner::PlanSolution;

/// JSON view of a [`PlanSolution`], keyed by state and action ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub eta: f64,
    pub horizon: usize,
    pub states: Vec<StateExport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateExport {
    pub state: usize,
    pub step: usize,
    pub prompt: usize,
    pub value: f64,
    pub log_normalizer: f64,
    pub q: Vec<f64>,
    pub policy: Vec<f64>,
}

impl PlanExport {
    pub fn new(mdp: &TabularMdp, plan: &PlanSolution) -> Self {
        let tree = mdp.tree();
        let states = (0..tree.num_states())
            .map(|i| {
                let s = StateId(i);
                let range = tree.sa_range(s);
                StateExport {
                    state: i,
                    step: tree.step(s),
                    prompt: tree.prompt_of(s),
                    value: plan.v_table()[i],
                    log_normalizer: plan.log_normalizers()[i],
                    q: plan.q_table()[range.clone()].to_vec(),
                    policy: plan.optimal_policy().row_probs(s),
                }
            })
            .collect();
        PlanExport {
            eta: plan.eta(),
            horizon: tree.horizon(),
            states,
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
