use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::kvdoc::KvDoc;

/// Built-in environment generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Deterministic tool outputs: the observation is a fixed function of `(s, a)`.
    ToolTree,
    /// Tool outputs are corrupted with probability `noise`.
    NoisyTool,
    /// Random kernels, utilities and prompt distribution.
    Random,
}

impl FromStr for Family {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tool_tree" => Ok(Family::ToolTree),
            "noisy_tool" => Ok(Family::NoisyTool),
            "random" => Ok(Family::Random),
            other => Err(CoreError::Config(format!(
                "unknown environment family `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::ToolTree => "tool_tree",
            Family::NoisyTool => "noisy_tool",
            Family::Random => "random",
        })
    }
}

/// Declarative environment description.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub family: Family,
    pub horizon: usize,
    pub num_prompts: usize,
    pub actions_per_state: usize,
    pub obs_per_step: usize,
    pub utility_bound: f64,
    pub seed: u64,
    /// Corruption probability of a tool output (`noisy_tool` only).
    pub noise: f64,
    /// Adds an early-answer action leading to an absorbing continuation.
    pub halt: bool,
}

pub const ENV_KEYS: [&str; 9] = [
    "family",
    "horizon",
    "num_prompts",
    "actions_per_state",
    "obs_per_step",
    "utility_bound",
    "seed",
    "noise",
    "halt",
];

impl EnvSpec {
    /// Named presets: `tool_tree` (the two-step reference tree), `noisy_tool`, `random`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = EnvSpec {
            family: Family::ToolTree,
            horizon: 2,
            num_prompts: 1,
            actions_per_state: 2,
            obs_per_step: 1,
            utility_bound: 1.0,
            seed: 0,
            noise: 0.0,
            halt: false,
        };
        match name {
            "tool_tree" => Ok(base),
            "noisy_tool" => Ok(EnvSpec {
                family: Family::NoisyTool,
                obs_per_step: 3,
                noise: 0.6,
                ..base
            }),
            "random" => Ok(EnvSpec {
                family: Family::Random,
                horizon: 3,
                num_prompts: 2,
                obs_per_step: 2,
                ..base
            }),
            other => Err(CoreError::Config(format!("unknown environment `{other}`"))),
        }
    }

    /// Consumes the environment keys of a document. Unrelated keys are left
    /// in place for the caller.
    pub fn take_from(doc: &mut KvDoc) -> Result<Self> {
        let family: Family = doc.require("family")?;
        let mut spec = EnvSpec::preset(&family.to_string())?;
        spec.horizon = doc.take_or("horizon", spec.horizon)?;
        spec.num_prompts = doc.take_or("num_prompts", spec.num_prompts)?;
        spec.actions_per_state = doc.take_or("actions_per_state", spec.actions_per_state)?;
        spec.obs_per_step = doc.take_or("obs_per_step", spec.obs_per_step)?;
        spec.utility_bound = doc.take_or("utility_bound", spec.utility_bound)?;
        spec.seed = doc.take_or("seed", spec.seed)?;
        spec.noise = doc.take_or("noise", spec.noise)?;
        spec.halt = doc.take_or("halt", spec.halt)?;
        Ok(spec)
    }

    /// Parses a standalone environment spec document; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::parse_str(text, "environment spec")?;
        let spec = Self::take_from(&mut doc)?;
        doc.finish()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut doc = KvDoc::from_file(path)?;
        let spec = Self::take_from(&mut doc)?;
        doc.finish()?;
        Ok(spec)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("family".into(), self.family.to_string()),
            ("horizon".into(), self.horizon.to_string()),
            ("num_prompts".into(), self.num_prompts.to_string()),
            (
                "actions_per_state".into(),
                self.actions_per_state.to_string(),
            ),
            ("obs_per_step".into(), self.obs_per_step.to_string()),
            ("utility_bound".into(), self.utility_bound.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("noise".into(), self.noise.to_string()),
            ("halt".into(), self.halt.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        crate::kvdoc::render(&self.to_pairs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let spec = EnvSpec {
            horizon: 4,
            seed: 99,
            noise: 0.25,
            ..EnvSpec::preset("noisy_tool").unwrap()
        };
        assert_eq!(EnvSpec::parse(&spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = EnvSpec::parse("family = random\ncolour = blue\n").unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn unknown_family_rejected() {
        assert!(EnvSpec::parse("family = maze\n").unwrap_err().is_config());
    }
}
