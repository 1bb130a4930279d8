use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::preference::LabelMode;
use crate::trainers::TrainerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainerKind {
    MDpo,
    MKto,
    SingleTurnDpo,
    SingleTurnKto,
    Raft,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 5] = [
        TrainerKind::MDpo,
        TrainerKind::MKto,
        TrainerKind::SingleTurnDpo,
        TrainerKind::SingleTurnKto,
        TrainerKind::Raft,
    ];

    /// Whether observation tokens enter the loss.
    pub fn unmasked(self) -> bool {
        matches!(
            self,
            TrainerKind::SingleTurnDpo | TrainerKind::SingleTurnKto
        )
    }
}

impl fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainerKind::MDpo => "m_dpo",
            TrainerKind::MKto => "m_kto",
            TrainerKind::SingleTurnDpo => "single_turn_dpo",
            TrainerKind::SingleTurnKto => "single_turn_kto",
            TrainerKind::Raft => "raft",
        })
    }
}

impl FromStr for TrainerKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        TrainerKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown trainer `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exploration {
    /// All `N` samples from the current main policy.
    OnPolicy,
    /// `n_current` from the current policy, `n_previous` from the previous round's.
    Mixture { n_current: usize, n_previous: usize },
    /// Half the samples from the main policy, half from it at this temperature.
    Temperature(f64),
    /// On-policy samples, paired best against worst.
    WestOfN,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration::Mixture {
            n_current: 20,
            n_previous: 10,
        }
    }
}

impl fmt::Display for Exploration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exploration::OnPolicy => f.write_str("on_policy"),
            Exploration::Mixture {
                n_current,
                n_previous,
            } => write!(f, "mixture:{n_current}:{n_previous}"),
            Exploration::Temperature(t) => write!(f, "temperature:{t}"),
            Exploration::WestOfN => f.write_str("west_of_n"),
        }
    }
}

impl FromStr for Exploration {
    type Err = CoreError;

    /// `on_policy`, `mixture`, `mixture:20:10`, `temperature:1.5`, `west_of_n`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoreError::Config(format!("unknown exploration strategy `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["on_policy"] => Ok(Exploration::OnPolicy),
            ["west_of_n"] => Ok(Exploration::WestOfN),
            ["mixture"] => Ok(Exploration::default()),
            ["mixture", a, b] => Ok(Exploration::Mixture {
                n_current: a.parse().map_err(|_| bad())?,
                n_previous: b.parse().map_err(|_| bad())?,
            }),
            ["temperature", t] => Ok(Exploration::Temperature(t.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// Always `π₀`: optimizes the KL-regularized target.
    Fixed,
    /// Last round's main policy: optimizes the non-regularized target.
    #[default]
    Moving,
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMode::Fixed => "fixed",
            ReferenceMode::Moving => "moving",
        })
    }
}

impl FromStr for ReferenceMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ReferenceMode::Fixed),
            "moving" => Ok(ReferenceMode::Moving),
            _ => Err(CoreError::Config(format!("unknown reference mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    pub trainer: TrainerKind,
    pub exploration: Exploration,
    pub reference_mode: ReferenceMode,
    /// Rounds `T`.
    pub rounds: usize,
    /// Prompts (candidate pairs) per round.
    pub m: usize,
    /// Samples per prompt when exploration does not fix it.
    pub n: usize,
    pub label: LabelMode,
    pub training: TrainerConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            trainer: TrainerKind::MDpo,
            exploration: Exploration::default(),
            reference_mode: ReferenceMode::default(),
            rounds: 3,
            m: 64,
            n: 30,
            label: LabelMode::Hard,
            training: TrainerConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.m == 0 {
            return Err(CoreError::Config("m must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(CoreError::Config("rounds must be >= 1".into()));
        }
        if self.samples_per_prompt() < 2 {
            return Err(CoreError::Config(
                "need at least 2 samples per prompt".into(),
            ));
        }
        if let Exploration::Temperature(t) = self.exploration {
            if !(t > 0.0) {
                return Err(CoreError::Config(format!(
                    "temperature must be > 0, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn samples_per_prompt(&self) -> usize {
        match self.exploration {
            Exploration::Mixture {
                n_current,
                n_previous,
            } => n_current + n_previous,
            _ => self.n,
        }
    }
}
