use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Index of a history state in a [`TreeIndex`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// How a non-root state was reached.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub parent: StateId,
    pub action: usize,
    pub observation: usize,
}

/// Shape parameters for a uniform history tree.
///
/// Ordinary states offer `actions_per_state` actions. With `halt` enabled,
/// states before the last step get one extra action (the last index) that
/// answers immediately and moves into an absorbing chain: one action and one
/// observation per step until the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeShape {
    pub horizon: usize,
    pub num_prompts: usize,
    pub actions_per_state: usize,
    pub obs_per_step: usize,
    pub halt: bool,
}

/// Immutable history tree: every state is a prompt plus the action/observation
/// sequence that led to it.
///
/// States are numbered breadth first, so every child id is larger than its
/// parent's. State-action pairs ("sa slots") and state-action-observation
/// triples ("sao slots") get dense indices of their own; Q-tables, logits,
/// utilities and kernels are flat vectors over those slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeIndex {
    horizon: usize,
    roots: Vec<StateId>,
    step: Vec<usize>,
    prompt: Vec<usize>,
    parent: Vec<Option<Edge>>,
    absorbing: Vec<bool>,
    sa_offset: Vec<usize>,
    sa_state: Vec<StateId>,
    obs_offset: Vec<usize>,
    children: Vec<StateId>,
    halt: bool,
}

impl TreeIndex {
    pub fn build(shape: &TreeShape) -> Result<Self> {
        if shape.horizon < 1 {
            return Err(CoreError::Config("horizon must be at least 1".into()));
        }
        if shape.num_prompts == 0 {
            return Err(CoreError::Config("need at least one prompt".into()));
        }
        if shape.actions_per_state == 0 {
            return Err(CoreError::Config("action sets must be nonempty".into()));
        }
        if shape.obs_per_step == 0 {
            return Err(CoreError::Config(
                "observation sets must be nonempty".into(),
            ));
        }
        let h_max = shape.horizon;
        let mut tree = TreeIndex {
            horizon: h_max,
            roots: Vec::new(),
            step: Vec::new(),
            prompt: Vec::new(),
            parent: Vec::new(),
            absorbing: Vec::new(),
            sa_offset: vec![0],
            sa_state: Vec::new(),
            obs_offset: vec![0],
            children: Vec::new(),
            halt: shape.halt,
        };
        for x in 0..shape.num_prompts {
            let id = tree.push_state(1, x, None, false);
            tree.roots.push(id);
        }
        // Breadth-first expansion; states are appended while we walk them.
        let mut cursor = 0;
        while cursor < tree.step.len() {
            let s = StateId(cursor);
            let h = tree.step[cursor];
            let absorbing = tree.absorbing[cursor];
            let n_actions = if absorbing {
                1
            } else if shape.halt && h < h_max {
                shape.actions_per_state + 1
            } else {
                shape.actions_per_state
            };
            let sa_start = tree.sa_state.len();
            for _ in 0..n_actions {
                tree.sa_state.push(s);
            }
            tree.sa_offset.push(sa_start + n_actions);
            for a in 0..n_actions {
                if h == h_max {
                    let last = *tree.obs_offset.last().unwrap();
                    tree.obs_offset.push(last);
                    continue;
                }
                let halting = absorbing || (shape.halt && a == shape.actions_per_state);
                let n_obs = if halting { 1 } else { shape.obs_per_step };
                for o in 0..n_obs {
                    let edge = Edge {
                        parent: s,
                        action: a,
                        observation: o,
                    };
                    let child = tree.push_state(h + 1, tree.prompt[cursor], Some(edge), halting);
                    tree.children.push(child);
                }
                let last = *tree.obs_offset.last().unwrap();
                tree.obs_offset.push(last + n_obs);
            }
            cursor += 1;
        }
        tree.check_tree_property()?;
        Ok(tree)
    }

    fn push_state(
        &mut self,
        step: usize,
        prompt: usize,
        parent: Option<Edge>,
        absorbing: bool,
    ) -> StateId {
        let id = StateId(self.step.len());
        self.step.push(step);
        self.prompt.push(prompt);
        self.parent.push(parent);
        self.absorbing.push(absorbing);
        id
    }

    /// Every non-root state must be the unique child of its recorded edge.
    fn check_tree_property(&self) -> Result<()> {
        for (i, edge) in self.parent.iter().enumerate() {
            let Some(edge) = edge else { continue };
            let sa = self.sa_slot(edge.parent, edge.action);
            if self.child(sa, edge.observation) != StateId(i) || edge.parent.0 >= i {
                return Err(CoreError::Structural(format!(
                    "state s{i} has an inconsistent parent link"
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn has_halt(&self) -> bool {
        self.halt
    }

    pub fn num_prompts(&self) -> usize {
        self.roots.len()
    }

    pub fn num_states(&self) -> usize {
        self.step.len()
    }

    pub fn num_sa(&self) -> usize {
        self.sa_state.len()
    }

    pub fn num_sao(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self, prompt: usize) -> StateId {
        self.roots[prompt]
    }

    pub fn roots(&self) -> &[StateId] {
        &self.roots
    }

    /// 1-based step of a state.
    pub fn step(&self, s: StateId) -> usize {
        self.step[s.0]
    }

    pub fn prompt_of(&self, s: StateId) -> usize {
        self.prompt[s.0]
    }

    pub fn parent(&self, s: StateId) -> Option<Edge> {
        self.parent[s.0]
    }

    pub fn is_absorbing(&self, s: StateId) -> bool {
        self.absorbing[s.0]
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.step[s.0] == self.horizon
    }

    pub fn num_actions(&self, s: StateId) -> usize {
        self.sa_offset[s.0 + 1] - self.sa_offset[s.0]
    }

    pub fn sa_range(&self, s: StateId) -> Range<usize> {
        self.sa_offset[s.0]..self.sa_offset[s.0 + 1]
    }

    pub fn sa_slot(&self, s: StateId, action: usize) -> usize {
        debug_assert!(action < self.num_actions(s));
        self.sa_offset[s.0] + action
    }

    pub fn state_of_sa(&self, sa: usize) -> StateId {
        self.sa_state[sa]
    }

    pub fn action_of_sa(&self, sa: usize) -> usize {
        sa - self.sa_offset[self.sa_state[sa].0]
    }

    pub fn obs_range(&self, sa: usize) -> Range<usize> {
        self.obs_offset[sa]..self.obs_offset[sa + 1]
    }

    pub fn num_obs(&self, sa: usize) -> usize {
        self.obs_offset[sa + 1] - self.obs_offset[sa]
    }

    pub fn child(&self, sa: usize, observation: usize) -> StateId {
        self.children[self.obs_offset[sa] + observation]
    }

    pub fn child_of_sao(&self, sao: usize) -> StateId {
        self.children[sao]
    }

    /// All states at a given 1-based step, in id order.
    pub fn states_at(&self, step: usize) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_states())
            .filter(move |&i| self.step[i] == step)
            .map(StateId)
    }

    /// Terminal sa slots (step-H state, answer action).
    pub fn terminal_sa(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_sa()).filter(move |&sa| self.is_terminal(self.sa_state[sa]))
    }

    /// `(sa, observation)` pairs leading from the root to `s`, oldest first.
    pub fn history(&self, s: StateId) -> Vec<(usize, usize)> {
        let mut path = Vec::with_capacity(self.step(s));
        let mut cur = s;
        while let Some(edge) = self.parent(cur) {
            path.push((self.sa_slot(edge.parent, edge.action), edge.observation));
            cur = edge.parent;
        }
        path.reverse();
        path
    }

    /// Whether `other` was built from the same shape.
    pub fn same_shape(&self, other: &TreeIndex) -> bool {
        std::ptr::eq(self, other)
            || (self.num_states() == other.num_states()
                && self.num_sa() == other.num_sa()
                && self.num_sao() == other.num_sao()
                && self.horizon == other.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(h: usize, a: usize, o: usize, halt: bool) -> TreeShape {
        TreeShape {
            horizon: h,
            num_prompts: 2,
            actions_per_state: a,
            obs_per_step: o,
            halt,
        }
    }

    #[test]
    fn counts_match_closed_form() {
        let t = TreeIndex::build(&shape(3, 2, 3, false)).unwrap();
        // per prompt: 1 + 6 + 36 states
        assert_eq!(t.num_states(), 2 * (1 + 6 + 36));
        assert_eq!(t.num_sa(), 2 * 2 * (1 + 6 + 36));
        assert_eq!(t.num_sao(), 2 * (6 + 36));
        assert_eq!(t.states_at(3).count(), 72);
    }

    #[test]
    fn parent_reconstruction_is_unique() {
        let t = TreeIndex::build(&shape(3, 3, 2, true)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in 0..t.num_states() {
            let s = StateId(i);
            if let Some(e) = t.parent(s) {
                assert!(seen.insert((e.parent, e.action, e.observation)));
                assert_eq!(t.child(t.sa_slot(e.parent, e.action), e.observation), s);
                assert!(e.parent < s);
                assert_eq!(t.step(s), t.step(e.parent) + 1);
            }
        }
    }

    #[test]
    fn halt_leads_to_absorbing_chain() {
        let t = TreeIndex::build(&shape(3, 2, 2, true)).unwrap();
        let root = t.root(0);
        assert_eq!(t.num_actions(root), 3);
        let halt_sa = t.sa_slot(root, 2);
        assert_eq!(t.num_obs(halt_sa), 1);
        let next = t.child(halt_sa, 0);
        assert!(t.is_absorbing(next));
        assert_eq!(t.num_actions(next), 1);
        let last = t.child(t.sa_slot(next, 0), 0);
        assert!(t.is_terminal(last) && t.is_absorbing(last));
        assert_eq!(t.num_actions(last), 1);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TreeIndex::build(&shape(0, 2, 2, false)).is_err());
        assert!(TreeIndex::build(&shape(2, 0, 2, false)).is_err());
    }
}
