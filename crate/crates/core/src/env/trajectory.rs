use rand::Rng;

use crate::env::mdp::TabularMdp;
use crate::env::policy::Policy;
use crate::env::tree::{StateId, TreeIndex};
use crate::error::{CoreError, Result};
use crate::math::sample_categorical;

/// A prompt followed by `a_1, o_1, …, o_{H-1}, a_H`.
///
/// The visited states are resolved against the tree at construction, so a
/// `Trajectory` is always tree-consistent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Trajectory {
    prompt: usize,
    actions: Vec<usize>,
    observations: Vec<usize>,
    states: Vec<StateId>,
}

impl Trajectory {
    pub fn new(
        tree: &TreeIndex,
        prompt: usize,
        actions: Vec<usize>,
        observations: Vec<usize>,
    ) -> Result<Self> {
        let h = tree.horizon();
        if prompt >= tree.num_prompts() {
            return Err(CoreError::Structural(format!(
                "prompt {prompt} does not exist"
            )));
        }
        if actions.len() != h || observations.len() + 1 != h {
            return Err(CoreError::Structural(format!(
                "trajectory needs {h} actions and {} observations, got {} and {}",
                h - 1,
                actions.len(),
                observations.len()
            )));
        }
        let mut states = Vec::with_capacity(h);
        let mut s = tree.root(prompt);
        for step in 0..h {
            states.push(s);
            let a = actions[step];
            if a >= tree.num_actions(s) {
                return Err(CoreError::Structural(format!(
                    "action {a} not available at {s}"
                )));
            }
            if step + 1 < h {
                let sa = tree.sa_slot(s, a);
                let o = observations[step];
                if o >= tree.num_obs(sa) {
                    return Err(CoreError::Structural(format!(
                        "observation {o} not possible after {s}, action {a}"
                    )));
                }
                s = tree.child(sa, o);
            }
        }
        Ok(Trajectory {
            prompt,
            actions,
            observations,
            states,
        })
    }

    /// Rebuilds the unique trajectory ending in a terminal sa slot.
    pub fn from_terminal_sa(tree: &TreeIndex, sa: usize) -> Result<Self> {
        let s = tree.state_of_sa(sa);
        if !tree.is_terminal(s) {
            return Err(CoreError::Structural(format!(
                "sa slot {sa} is not terminal"
            )));
        }
        let hist = tree.history(s);
        let mut actions: Vec<usize> = hist.iter().map(|&(sa, _)| tree.action_of_sa(sa)).collect();
        let observations = hist.iter().map(|&(_, o)| o).collect();
        actions.push(tree.action_of_sa(sa));
        Trajectory::new(tree, tree.prompt_of(s), actions, observations)
    }

    pub fn prompt(&self) -> usize {
        self.prompt
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    /// `s_1, …, s_H`.
    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    /// The sa slots `(s_h, a_h)` for `h = 1..H`.
    pub fn sa_slots(&self, tree: &TreeIndex) -> Vec<usize> {
        self.states
            .iter()
            .zip(&self.actions)
            .map(|(&s, &a)| tree.sa_slot(s, a))
            .collect()
    }

    /// The sao slots `(s_h, a_h, o_h)` for `h = 1..H-1`.
    pub fn sao_slots(&self, tree: &TreeIndex) -> Vec<usize> {
        self.states
            .iter()
            .zip(&self.actions)
            .zip(&self.observations)
            .map(|((&s, &a), &o)| tree.obs_range(tree.sa_slot(s, a)).start + o)
            .collect()
    }

    pub fn terminal_sa(&self, tree: &TreeIndex) -> usize {
        let h = self.states.len() - 1;
        tree.sa_slot(self.states[h], self.actions[h])
    }

    /// Step at which the halt action was taken, if any.
    pub fn halted_at(&self, tree: &TreeIndex) -> Option<usize> {
        self.states.iter().position(|&s| tree.is_absorbing(s))
    }

    /// Compact `a.o.a.o.a` encoding.
    pub fn encode(&self) -> String {
        let mut parts = Vec::with_capacity(2 * self.actions.len());
        for (i, a) in self.actions.iter().enumerate() {
            parts.push(a.to_string());
            if let Some(o) = self.observations.get(i) {
                parts.push(o.to_string());
            }
        }
        parts.join(".")
    }

    pub fn decode(tree: &TreeIndex, prompt: usize, text: &str) -> Result<Self> {
        let values = text
            .split('.')
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CoreError::Parse {
                location: "trajectory".into(),
                message: format!("`{text}`: {e}"),
            })?;
        let actions = values.iter().step_by(2).copied().collect();
        let observations = values.iter().skip(1).step_by(2).copied().collect();
        Trajectory::new(tree, prompt, actions, observations)
    }
}

/// Samples `x ~ d0`, then alternates `a_h ~ π_h(·|s_h)` and `o_h ~ P_h(·|s_h, a_h)`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    rng: &mut R,
) -> Result<Trajectory> {
    let prompt = sample_categorical(mdp.prompt_distribution(), rng);
    sample_from_prompt(mdp, policy, prompt, rng)
}

/// Like [`sample_trajectory`] with the prompt fixed.
pub fn sample_from_prompt<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    prompt: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let tree = mdp.tree();
    policy.check_covers(tree)?;
    let h = tree.horizon();
    let mut actions = Vec::with_capacity(h);
    let mut observations = Vec::with_capacity(h - 1);
    let mut states = Vec::with_capacity(h);
    let mut s = tree.root(prompt);
    for step in 0..h {
        states.push(s);
        let probs = policy.row_probs(s);
        let a = sample_categorical(&probs, rng);
        actions.push(a);
        if step + 1 < h {
            let sa = tree.sa_slot(s, a);
            let o = sample_categorical(mdp.kernel_row(sa), rng);
            observations.push(o);
            s = tree.child(sa, o);
        }
    }
    Ok(Trajectory {
        prompt,
        actions,
        observations,
        states,
    })
}

/// Continues from `(state, action)` to the horizon; returns the terminal sa slot.
pub fn rollout_from<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    sa: usize,
    rng: &mut R,
) -> usize {
    let tree = mdp.tree();
    let mut sa = sa;
    while !tree.is_terminal(tree.state_of_sa(sa)) {
        let o = sample_categorical(mdp.kernel_row(sa), rng);
        let s = tree.child(sa, o);
        let a = sample_categorical(&policy.row_probs(s), rng);
        sa = tree.sa_slot(s, a);
    }
    sa
}

/// `Σ_h log π_h(a_h|s_h)`, plus the observation terms when unmasked.
///
/// Unmasked observation terms come from the policy's observation predictor
/// when it has one, otherwise from the true kernel of `kernel_source`.
pub fn trajectory_log_prob(
    policy: &Policy,
    kernel_source: Option<&TabularMdp>,
    traj: &Trajectory,
    mask_observations: bool,
) -> Result<f64> {
    let tree = policy.tree();
    let mut total: f64 = traj
        .sa_slots(tree)
        .iter()
        .map(|&sa| policy.log_prob(sa))
        .sum();
    if mask_observations {
        return Ok(total);
    }
    let saos = traj.sao_slots(tree);
    if policy.has_obs_predictor() {
        total += saos
            .iter()
            .map(|&sao| policy.obs_log_prob(sao).unwrap())
            .sum::<f64>();
    } else if let Some(mdp) = kernel_source {
        policy.check_covers(mdp.tree())?;
        total += saos.iter().map(|&sao| mdp.kernel()[sao].ln()).sum::<f64>();
    } else {
        return Err(CoreError::Config(
            "unmasked log-probability needs an observation predictor or a kernel".into(),
        ));
    }
    Ok(total)
}
