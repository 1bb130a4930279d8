use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::Trajectory;
use crate::error::{CoreError, Result};
use crate::math::sigmoid;
use crate::preference::{PreferenceRecord, UtilityFunction};

/// `P(τ¹ ≻ τ²) = σ(u(τ¹) − u(τ²))`.
pub fn bt_probability(u: &UtilityFunction, first: &Trajectory, second: &Trajectory) -> Result<f64> {
    if first.prompt() != second.prompt() {
        return Err(CoreError::Structural(format!(
            "trajectories answer different prompts ({} and {})",
            first.prompt(),
            second.prompt()
        )));
    }
    Ok(sigmoid(u.of(first) - u.of(second)))
}

/// Bradley–Terry draw: `true` means `first` is preferred.
pub fn bt_sample<R: Rng + ?Sized>(
    u: &UtilityFunction,
    first: &Trajectory,
    second: &Trajectory,
    rng: &mut R,
) -> Result<bool> {
    let p = bt_probability(u, first, second)?;
    Ok(rng.random::<f64>() < p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// The higher-utility trajectory always wins; ties fall back to a BT draw.
    #[default]
    Hard,
    Soft,
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Hard => "hard",
            LabelMode::Soft => "soft",
        })
    }
}

impl FromStr for LabelMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelMode::Hard),
            "soft" => Ok(LabelMode::Soft),
            _ => Err(CoreError::Config(format!("unknown label mode `{s}`"))),
        }
    }
}

pub fn label_pair<R: Rng + ?Sized>(
    u: &UtilityFunction,
    first: &Trajectory,
    second: &Trajectory,
    mode: LabelMode,
    rng: &mut R,
) -> Result<bool> {
    let p = bt_probability(u, first, second)?;
    let (a, b) = (u.of(first), u.of(second));
    Ok(match mode {
        LabelMode::Hard if a != b => a > b,
        _ => rng.random::<f64>() < p,
    })
}

/// Where a sampled trajectory came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Current,
    Previous,
    /// Index into a list of policy variants (e.g. temperatures).
    Variant(usize),
}

/// `N` responses to one prompt.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub prompt: usize,
    pub trajectories: Vec<Trajectory>,
    pub sources: Vec<Source>,
}

impl SampleBatch {
    pub fn on_policy(prompt: usize, trajectories: Vec<Trajectory>) -> Self {
        let sources = vec![Source::Current; trajectories.len()];
        SampleBatch {
            prompt,
            trajectories,
            sources,
        }
    }
}

pub struct AnnotateOptions<'a> {
    pub label: LabelMode,
    /// Trajectories with utility at or above this are winners. Defaults to half the bound.
    pub threshold: Option<f64>,
    /// Drops trajectories for which the predicate is false before grouping.
    pub filter: Option<&'a dyn Fn(&Trajectory) -> bool>,
}

impl Default for AnnotateOptions<'_> {
    fn default() -> Self {
        AnnotateOptions {
            label: LabelMode::Hard,
            threshold: None,
            filter: None,
        }
    }
}

/// Splits each batch into winners and losers and emits at most one pair per
/// prompt, drawn uniformly from `G^w × G^l`. Prompts where either side is
/// empty are skipped. The winner is `traj_1`; `z` comes from the label mode.
pub fn annotate_pairs<R: Rng + ?Sized>(
    batches: &[SampleBatch],
    u: &UtilityFunction,
    options: &AnnotateOptions<'_>,
    rng: &mut R,
) -> Result<Vec<PreferenceRecord>> {
    let threshold = options.threshold.unwrap_or(u.bound() / 2.0);
    let mut out = Vec::new();
    for batch in batches {
        if batch.trajectories.len() < 2 {
            return Err(CoreError::Config(format!(
                "annotation needs at least 2 samples per prompt, prompt {} has {}",
                batch.prompt,
                batch.trajectories.len()
            )));
        }
        let kept = batch
            .trajectories
            .iter()
            .filter(|t| options.filter.is_none_or(|f| f(t)));
        let (winners, losers): (Vec<&Trajectory>, Vec<&Trajectory>) =
            kept.partition(|t| u.of(t) >= threshold);
        if winners.is_empty() || losers.is_empty() {
            continue;
        }
        let w = winners[rng.random_range(0..winners.len())];
        let l = losers[rng.random_range(0..losers.len())];
        let z = label_pair(u, w, l, options.label, rng)?;
        out.push(PreferenceRecord::new(w.clone(), l.clone(), z)?);
    }
    Ok(out)
}
