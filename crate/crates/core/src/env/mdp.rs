use std::sync::Arc;

use crate::env::tree::{StateId, TreeIndex};
use crate::error::{CoreError, Result};

/// Row-sum tolerance for probability tables.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Raw ingredients of a [`TabularMdp`]; kernel rows and the prompt
/// distribution may be unnormalized weights.
#[derive(Clone, Debug)]
pub struct MdpParts {
    pub tree: Arc<TreeIndex>,
    pub prompt_weights: Vec<f64>,
    /// One weight per sao slot.
    pub kernel_weights: Vec<f64>,
    /// One value per sa slot; only terminal slots are read.
    pub utility: Vec<f64>,
    /// Answer label per sa slot (terminal slots only).
    pub answers: Vec<Option<usize>>,
    /// Gold answer label per prompt.
    pub gold: Vec<usize>,
    pub bound: f64,
}

/// Finite-horizon, tree-structured MDP with external observations.
///
/// Utility is attached to terminal `(s_H, a_H)` pairs. Since `s_H` carries the
/// whole history, this is the same thing as a utility of the full response.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    tree: Arc<TreeIndex>,
    d0: Vec<f64>,
    kernel: Vec<f64>,
    utility: Vec<f64>,
    answers: Vec<Option<usize>>,
    gold: Vec<usize>,
    bound: f64,
}

fn normalize(weights: &[f64], what: &str) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(CoreError::Config(format!(
            "{what} has negative or non-finite entries"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(CoreError::Config(format!(
            "{what} cannot be normalized (zero mass)"
        )));
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

impl TabularMdp {
    pub fn new(parts: MdpParts) -> Result<Self> {
        let tree = parts.tree;
        if parts.bound < 0.0 || !parts.bound.is_finite() {
            return Err(CoreError::Config(format!(
                "utility bound must be finite and >= 0, got {}",
                parts.bound
            )));
        }
        if parts.prompt_weights.len() != tree.num_prompts() {
            return Err(CoreError::Structural(
                "prompt distribution size mismatch".into(),
            ));
        }
        if parts.gold.len() != tree.num_prompts() {
            return Err(CoreError::Structural(
                "gold answer table size mismatch".into(),
            ));
        }
        if parts.answers.len() != tree.num_sa() {
            return Err(CoreError::Structural("answer table size mismatch".into()));
        }
        let d0 = normalize(&parts.prompt_weights, "prompt distribution")?;
        let kernel = normalize_kernel(&tree, &parts.kernel_weights)?;
        let utility = check_utility(&tree, parts.utility, parts.bound)?;
        Ok(TabularMdp {
            tree,
            d0,
            kernel,
            utility,
            answers: parts.answers,
            gold: parts.gold,
            bound: parts.bound,
        })
    }

    /// Same environment with a different observation kernel.
    pub fn with_kernel(&self, kernel_weights: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.kernel = normalize_kernel(&self.tree, kernel_weights)?;
        Ok(out)
    }

    /// Same environment with a different utility table.
    pub fn with_utility(&self, utility: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.utility = check_utility(&self.tree, utility, self.bound)?;
        Ok(out)
    }

    /// Same environment with a different prompt distribution.
    pub fn with_prompt_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.tree.num_prompts() {
            return Err(CoreError::Structural(
                "prompt distribution size mismatch".into(),
            ));
        }
        let mut out = self.clone();
        out.d0 = normalize(weights, "prompt distribution")?;
        Ok(out)
    }

    pub fn tree(&self) -> &Arc<TreeIndex> {
        &self.tree
    }

    pub fn horizon(&self) -> usize {
        self.tree.horizon()
    }

    pub fn prompt_distribution(&self) -> &[f64] {
        &self.d0
    }

    /// Observation probabilities, one per sao slot.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn kernel_row(&self, sa: usize) -> &[f64] {
        &self.kernel[self.tree.obs_range(sa)]
    }

    /// Utility per sa slot (zero on non-terminal slots).
    pub fn utility_table(&self) -> &[f64] {
        &self.utility
    }

    pub fn utility(&self, terminal_sa: usize) -> f64 {
        self.utility[terminal_sa]
    }

    pub fn answer(&self, terminal_sa: usize) -> Option<usize> {
        self.answers[terminal_sa]
    }

    pub fn answers(&self) -> &[Option<usize>] {
        &self.answers
    }

    pub fn gold(&self) -> &[usize] {
        &self.gold
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// True when every kernel row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.tree.num_sa()).all(|sa| {
            let row = self.kernel_row(sa);
            row.is_empty() || row.iter().filter(|&&p| p > 0.0).count() == 1
        })
    }

    pub fn child(&self, sa: usize, observation: usize) -> StateId {
        self.tree.child(sa, observation)
    }
}

fn normalize_kernel(tree: &TreeIndex, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != tree.num_sao() {
        return Err(CoreError::Structural(format!(
            "kernel has {} entries, tree has {} observation slots",
            weights.len(),
            tree.num_sao()
        )));
    }
    let mut out = vec![0.0; weights.len()];
    for sa in 0..tree.num_sa() {
        let range = tree.obs_range(sa);
        if range.is_empty() {
            continue;
        }
        let s = tree.state_of_sa(sa);
        let row = normalize(
            &weights[range.clone()],
            &format!("kernel row at {s}, action {}", tree.action_of_sa(sa)),
        )?;
        let sum: f64 = row.iter().sum();
        debug_assert!((sum - 1.0).abs() <= NORMALIZATION_TOL);
        out[range].copy_from_slice(&row);
    }
    Ok(out)
}

fn check_utility(tree: &TreeIndex, utility: Vec<f64>, bound: f64) -> Result<Vec<f64>> {
    if utility.len() != tree.num_sa() {
        return Err(CoreError::Structural("utility table size mismatch".into()));
    }
    let mut utility = utility;
    for sa in 0..tree.num_sa() {
        if !tree.is_terminal(tree.state_of_sa(sa)) {
            utility[sa] = 0.0;
            continue;
        }
        let u = utility[sa];
        if !(0.0..=bound).contains(&u) {
            return Err(CoreError::Domain(format!(
                "utility {u} at sa slot {sa} outside [0, {bound}]"
            )));
        }
    }
    Ok(utility)
}
