use std::fmt;
use std::sync::Arc;

use crate::env::{TabularMdp, Trajectory, TreeIndex};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UtilityKind {
    ResultCheck,
    Orm,
    PrmMin,
    Table,
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilityKind::ResultCheck => "result_check",
            UtilityKind::Orm => "orm",
            UtilityKind::PrmMin => "prm_min",
            UtilityKind::Table => "table",
        })
    }
}

/// A utility of complete trajectories, stored as a table over terminal sa
/// slots. Every kind reduces to this table; PRM utilities also keep their
/// step rewards.
#[derive(Clone, Debug)]
pub struct UtilityFunction {
    kind: UtilityKind,
    tree: Arc<TreeIndex>,
    values: Vec<f64>,
    step_rewards: Option<Vec<f64>>,
    bound: f64,
}

impl UtilityFunction {
    pub(crate) fn build(
        kind: UtilityKind,
        tree: &Arc<TreeIndex>,
        values: Vec<f64>,
        step_rewards: Option<Vec<f64>>,
        bound: f64,
    ) -> Result<Self> {
        if values.len() != tree.num_sa() {
            return Err(CoreError::Structural("utility table size mismatch".into()));
        }
        for sa in tree.terminal_sa() {
            let v = values[sa];
            if !(0.0..=bound).contains(&v) {
                return Err(CoreError::Domain(format!(
                    "utility {v} at slot {sa} is outside [0, {bound}]"
                )));
            }
        }
        Ok(UtilityFunction {
            kind,
            tree: tree.clone(),
            values,
            step_rewards,
            bound,
        })
    }

    /// Arbitrary terminal table with values in `[0, bound]`.
    pub fn from_table(tree: &Arc<TreeIndex>, values: Vec<f64>, bound: f64) -> Result<Self> {
        Self::build(UtilityKind::Table, tree, values, None, bound)
    }

    /// The environment's own utility `u*`.
    pub fn of_environment(mdp: &TabularMdp) -> Self {
        Self::build(
            UtilityKind::Table,
            mdp.tree(),
            mdp.utility_table().to_vec(),
            None,
            mdp.bound(),
        )
        .expect("environment utility is validated on construction")
    }

    pub fn kind(&self) -> UtilityKind {
        self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn tree(&self) -> &Arc<TreeIndex> {
        &self.tree
    }

    /// Value per sa slot; only terminal slots are meaningful.
    pub fn table(&self) -> &[f64] {
        &self.values
    }

    /// PRM step rewards `r_θ(s_h, a_h)`, for [`UtilityKind::PrmMin`].
    pub fn step_rewards(&self) -> Option<&[f64]> {
        self.step_rewards.as_deref()
    }

    pub fn at(&self, terminal_sa: usize) -> f64 {
        self.values[terminal_sa]
    }

    pub fn of(&self, traj: &Trajectory) -> f64 {
        self.values[traj.terminal_sa(&self.tree)]
    }

    /// Copy of `mdp` whose utility is this function.
    pub fn install(&self, mdp: &TabularMdp) -> Result<TabularMdp> {
        if !mdp.tree().same_shape(&self.tree) {
            return Err(CoreError::Structural(
                "utility and environment trees differ".into(),
            ));
        }
        mdp.with_utility(self.values.clone())
    }
}
