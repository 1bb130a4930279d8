use rand::Rng;

use crate::env::{expected_utility_on, sample_from_prompt, Policy, TabularMdp};
use crate::error::{CoreError, Result};
use crate::preference::{PreferenceRecord, SampleBatch, Source, UtilityFunction};

/// Temperatures of the initial policy standing in for two earlier checkpoints
/// when there is no previous round to mix with.
pub const FIRST_ROUND_TEMPERATURES: [f64; 2] = [1.0, 1.5];

/// `π` with logits divided by `temperature`; row-wise argmax is unchanged.
pub fn temperature_policy(policy: &Policy, temperature: f64) -> Result<Policy> {
    policy.scaled(temperature)
}

/// `n_current` samples from `current` and `n_previous` from `previous` for one
/// prompt. Without a previous policy the two groups come from `current` at
/// [`FIRST_ROUND_TEMPERATURES`].
pub fn mixture_sampling<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    current: &Policy,
    previous: Option<&Policy>,
    n_current: usize,
    n_previous: usize,
    prompt: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    if n_current + n_previous < 2 {
        return Err(CoreError::Config(
            "mixture sampling needs at least 2 samples".into(),
        ));
    }
    let (first, second, tags) = match previous {
        Some(p) => (
            current.clone(),
            p.clone(),
            [Source::Current, Source::Previous],
        ),
        None => (
            temperature_policy(current, FIRST_ROUND_TEMPERATURES[0])?,
            temperature_policy(current, FIRST_ROUND_TEMPERATURES[1])?,
            [Source::Variant(0), Source::Variant(1)],
        ),
    };
    let mut trajectories = Vec::with_capacity(n_current + n_previous);
    let mut sources = Vec::with_capacity(n_current + n_previous);
    for (pol, n, tag) in [(&first, n_current, tags[0]), (&second, n_previous, tags[1])] {
        for _ in 0..n {
            trajectories.push(sample_from_prompt(mdp, pol, prompt, rng)?);
            sources.push(tag);
        }
    }
    Ok(SampleBatch {
        prompt,
        trajectories,
        sources,
    })
}

/// Best-against-worst pair per batch; ties go to the lowest index, and batches
/// with all-equal utilities are skipped.
pub fn west_of_n_pairs(
    batches: &[SampleBatch],
    u: &UtilityFunction,
) -> Result<Vec<PreferenceRecord>> {
    let mut out = Vec::new();
    for b in batches {
        if b.trajectories.len() < 2 {
            return Err(CoreError::Config(format!(
                "west-of-n needs n >= 2, prompt {} has {}",
                b.prompt,
                b.trajectories.len()
            )));
        }
        let values: Vec<f64> = b.trajectories.iter().map(|t| u.of(t)).collect();
        let (mut best, mut worst) = (0, 0);
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
            if *v < values[worst] {
                worst = i;
            }
        }
        if values[best] == values[worst] {
            continue;
        }
        out.push(PreferenceRecord::new(
            b.trajectories[best].clone(),
            b.trajectories[worst].clone(),
            true,
        )?);
    }
    Ok(out)
}

/// Index of the candidate with the highest exact expected utility on the
/// validation prompts; ties go to the earliest.
pub fn select_best_model(
    mdp: &TabularMdp,
    candidates: &[Policy],
    validation: &[usize],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyData("no candidate policies".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in candidates.iter().enumerate() {
        let v = expected_utility_on(mdp, p, validation)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}
