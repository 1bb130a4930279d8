use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::mdp::{MdpParts, TabularMdp};
use crate::env::spec::{EnvSpec, Family};
use crate::env::tree::{StateId, TreeIndex, TreeShape};
use crate::error::{CoreError, Result};

/// Builds a seeded environment from its description.
pub fn build_environment(spec: &EnvSpec) -> Result<TabularMdp> {
    if spec.horizon < 1 {
        return Err(CoreError::Config("horizon must be at least 1".into()));
    }
    if spec.actions_per_state == 0 {
        return Err(CoreError::Config("action sets must be nonempty".into()));
    }
    if !(spec.utility_bound >= 0.0) || !spec.utility_bound.is_finite() {
        return Err(CoreError::Config(format!(
            "utility bound must be >= 0, got {}",
            spec.utility_bound
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(CoreError::Config(format!(
            "noise must lie in [0, 1], got {}",
            spec.noise
        )));
    }
    match spec.family {
        Family::ToolTree if spec.noise != 0.0 => {
            return Err(CoreError::Config(
                "tool_tree observations are deterministic; use noisy_tool for noise".into(),
            ))
        }
        Family::NoisyTool if spec.noise == 0.0 => {
            return Err(CoreError::Config("noisy_tool needs noise > 0".into()))
        }
        _ => {}
    }
    let tree = Arc::new(TreeIndex::build(&TreeShape {
        horizon: spec.horizon,
        num_prompts: spec.num_prompts,
        actions_per_state: spec.actions_per_state,
        obs_per_step: spec.obs_per_step,
        halt: spec.halt,
    })?);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.family {
        Family::ToolTree | Family::NoisyTool => tool_environment(spec, tree, &mut rng),
        Family::Random => random_environment(spec, tree, &mut rng),
    }
}

/// Label reserved for the correct answer.
const GOLD_LABEL: usize = 0;

/// Tool-use environments.
///
/// Each prompt needs `k` specific tool calls (all `H-1` steps unless halting
/// is enabled, in which case `k` is drawn per prompt). Every tool call returns
/// an output; the right final answer is `(g + Σ outputs of the required
/// calls) mod |A|`, so the agent has to read the tool results. With noise,
/// an output is resampled uniformly with probability `noise`.
fn tool_environment(
    spec: &EnvSpec,
    tree: Arc<TreeIndex>,
    rng: &mut ChaCha8Rng,
) -> Result<TabularMdp> {
    let h_max = spec.horizon;
    let n_actions = spec.actions_per_state;
    let n_obs = spec.obs_per_step;

    let mut required = Vec::with_capacity(spec.num_prompts);
    let mut gold_calls = Vec::with_capacity(spec.num_prompts);
    let mut gold_final = Vec::with_capacity(spec.num_prompts);
    for _ in 0..spec.num_prompts {
        let k = if spec.halt {
            rng.random_range(0..h_max)
        } else {
            h_max - 1
        };
        required.push(k);
        gold_calls.push(
            (0..h_max.saturating_sub(1))
                .map(|_| rng.random_range(0..n_actions))
                .collect::<Vec<_>>(),
        );
        gold_final.push(rng.random_range(0..n_actions));
    }

    let mut kernel = vec![0.0; tree.num_sao()];
    for sa in 0..tree.num_sa() {
        let range = tree.obs_range(sa);
        if range.is_empty() {
            continue;
        }
        if range.len() == 1 {
            kernel[range.start] = 1.0;
            continue;
        }
        let clean = rng.random_range(0..n_obs);
        for (o, slot) in range.enumerate() {
            let base = if o == clean { 1.0 - spec.noise } else { 0.0 };
            kernel[slot] = base + spec.noise / n_obs as f64;
        }
    }

    let mut utility = vec![0.0; tree.num_sa()];
    let mut answers = vec![None; tree.num_sa()];
    for sa in tree.terminal_sa().collect::<Vec<_>>() {
        let s = tree.state_of_sa(sa);
        let x = tree.prompt_of(s);
        let k = required[x];
        let hist = tree.history(s);
        let calls: Vec<usize> = hist.iter().map(|&(sa, _)| tree.action_of_sa(sa)).collect();
        let outputs: Vec<usize> = hist.iter().map(|&(_, o)| o).collect();
        let halted_at = first_absorbing_step(&tree, s);
        let (correct, wrong_label) = match halted_at {
            Some(h) => {
                // The halt action was taken at step h - 1, after h - 2 tool calls.
                let calls_made = h - 2;
                let ok = calls_made >= k && calls[..k] == gold_calls[x][..k];
                (ok, n_actions + 1)
            }
            None => {
                let a = tree.action_of_sa(sa);
                let target = (gold_final[x] + outputs[..k].iter().sum::<usize>()) % n_actions;
                let ok = calls[..k] == gold_calls[x][..k] && a == target;
                (ok, 1 + a)
            }
        };
        answers[sa] = Some(if correct { GOLD_LABEL } else { wrong_label });
        utility[sa] = if correct { spec.utility_bound } else { 0.0 };
    }

    TabularMdp::new(MdpParts {
        prompt_weights: vec![1.0; spec.num_prompts],
        kernel_weights: kernel,
        utility,
        answers,
        gold: vec![GOLD_LABEL; spec.num_prompts],
        bound: spec.utility_bound,
        tree,
    })
}

fn first_absorbing_step(tree: &TreeIndex, s: StateId) -> Option<usize> {
    if !tree.is_absorbing(s) {
        return None;
    }
    let mut cur = s;
    while let Some(edge) = tree.parent(cur) {
        if !tree.is_absorbing(edge.parent) {
            return Some(tree.step(cur));
        }
        cur = edge.parent;
    }
    None
}

/// Flat Dirichlet(1) draw.
pub(crate) fn dirichlet_flat<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let sum: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / sum).collect()
}

fn random_environment(
    spec: &EnvSpec,
    tree: Arc<TreeIndex>,
    rng: &mut ChaCha8Rng,
) -> Result<TabularMdp> {
    let prompt_weights = dirichlet_flat(spec.num_prompts, rng);
    let mut kernel = vec![0.0; tree.num_sao()];
    for sa in 0..tree.num_sa() {
        let range = tree.obs_range(sa);
        if !range.is_empty() {
            let row = dirichlet_flat(range.len(), rng);
            kernel[range].copy_from_slice(&row);
        }
    }
    let mut utility = vec![0.0; tree.num_sa()];
    let mut answers = vec![None; tree.num_sa()];
    for sa in tree.terminal_sa().collect::<Vec<_>>() {
        let u = spec.utility_bound * rng.random::<f64>();
        utility[sa] = u;
        let correct = u >= 0.5 * spec.utility_bound;
        answers[sa] = Some(if correct {
            GOLD_LABEL
        } else {
            1 + tree.action_of_sa(sa)
        });
    }
    TabularMdp::new(MdpParts {
        prompt_weights,
        kernel_weights: kernel,
        utility,
        answers,
        gold: vec![GOLD_LABEL; spec.num_prompts],
        bound: spec.utility_bound,
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_tree_rows_are_point_masses() {
        let mdp = build_environment(&EnvSpec {
            obs_per_step: 3,
            ..EnvSpec::preset("tool_tree").unwrap()
        })
        .unwrap();
        let tree = mdp.tree();
        for sa in 0..tree.num_sa() {
            let row = mdp.kernel_row(sa);
            if !row.is_empty() {
                assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&p| p == 0.0).count(), row.len() - 1);
            }
        }
        assert!(mdp.is_deterministic());
    }

    #[test]
    fn reference_tree_has_single_correct_path() {
        let mdp = build_environment(&EnvSpec::preset("tool_tree").unwrap()).unwrap();
        let ones = mdp
            .tree()
            .terminal_sa()
            .filter(|&sa| mdp.utility(sa) == 1.0)
            .count();
        assert_eq!(ones, 1);
        assert_eq!(mdp.tree().terminal_sa().count(), 4);
    }

    #[test]
    fn random_is_seed_deterministic() {
        let spec = EnvSpec {
            seed: 7,
            ..EnvSpec::preset("random").unwrap()
        };
        let a = build_environment(&spec).unwrap();
        let b = build_environment(&spec).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.kernel()), bits(b.kernel()));
        assert_eq!(bits(a.utility_table()), bits(b.utility_table()));
        assert_eq!(bits(a.prompt_distribution()), bits(b.prompt_distribution()));
        let c = build_environment(&EnvSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(bits(a.kernel()), bits(c.kernel()));
    }

    #[test]
    fn noisy_tool_has_spread_rows() {
        let spec = EnvSpec {
            obs_per_step: 3,
            ..EnvSpec::preset("noisy_tool").unwrap()
        };
        let mdp = build_environment(&spec).unwrap();
        let spread = (0..mdp.tree().num_sa())
            .any(|sa| mdp.kernel_row(sa).iter().filter(|&&p| p > 0.0).count() >= 2);
        assert!(spread);
        assert!(!mdp.is_deterministic());
    }

    #[test]
    fn invariants_hold_for_all_families() {
        for name in ["tool_tree", "noisy_tool", "random"] {
            for halt in [false, true] {
                let spec = EnvSpec {
                    horizon: 3,
                    num_prompts: 3,
                    halt,
                    ..EnvSpec::preset(name).unwrap()
                };
                let mdp = build_environment(&spec).unwrap();
                let tree = mdp.tree();
                assert!((mdp.prompt_distribution().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                for sa in 0..tree.num_sa() {
                    let row = mdp.kernel_row(sa);
                    if !row.is_empty() {
                        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    }
                }
                for sa in tree.terminal_sa() {
                    let u = mdp.utility(sa);
                    assert!((0.0..=spec.utility_bound).contains(&u));
                }
            }
        }
    }

    #[test]
    fn halting_can_be_correct() {
        let spec = EnvSpec {
            horizon: 4,
            num_prompts: 6,
            halt: true,
            ..EnvSpec::preset("tool_tree").unwrap()
        };
        let mdp = build_environment(&spec).unwrap();
        let tree = mdp.tree();
        let halted_correct = tree
            .terminal_sa()
            .any(|sa| tree.is_absorbing(tree.state_of_sa(sa)) && mdp.utility(sa) > 0.0);
        assert!(halted_correct);
    }

    #[test]
    fn rejects_bad_specs() {
        let base = EnvSpec::preset("tool_tree").unwrap();
        assert!(build_environment(&EnvSpec {
            horizon: 0,
            ..base.clone()
        })
        .is_err());
        assert!(build_environment(&EnvSpec {
            actions_per_state: 0,
            ..base.clone()
        })
        .is_err());
        assert!(build_environment(&EnvSpec {
            utility_bound: -1.0,
            ..base.clone()
        })
        .is_err());
        assert!(build_environment(&EnvSpec { noise: 0.2, ..base }).is_err());
    }
}
