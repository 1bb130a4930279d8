use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    exact_expected_value, expected_kl, expected_utility, sample_from_prompt, Policy,
    PolicyCheckpoint, TabularMdp,
};
use crate::error::{CoreError, Result};
use crate::math::sample_categorical;
use crate::online::{
    mixture_sampling, temperature_policy, west_of_n_pairs, Exploration, LoopConfig, ReferenceMode,
    RoundMetrics, TrainerKind,
};
use crate::preference::{
    annotate_pairs, AnnotateOptions, PreferenceRecord, SampleBatch, Source, UtilityFunction,
};
use crate::trainers::{
    train, DpoObjective, KtoObjective, LabeledData, NllObjective, Objective, TraceRow,
    TrainerConfig,
};

#[derive(Clone, Debug)]
pub struct IterationState {
    pub round: usize,
    pub initial: Policy,
    /// `π¹_t`.
    pub main: Policy,
    /// `π¹_{t−1}`, if any.
    pub previous: Option<Policy>,
    /// `π²_t` for the coming round.
    pub exploration: Policy,
    /// Reference used by the coming round's training.
    pub reference: Policy,
    pub dataset: Vec<PreferenceRecord>,
    pub metrics: Vec<RoundMetrics>,
    /// Main policy after each round, starting with `π₀`.
    pub history: Vec<Policy>,
    /// Loss trace of the latest training run.
    pub last_trace: Vec<TraceRow>,
}

/// Serialized main and reference tables after a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundCheckpoint {
    pub round: usize,
    pub main: PolicyCheckpoint,
    pub reference: PolicyCheckpoint,
}

impl IterationState {
    /// Round-0 state. Unmasked trainers get a uniform observation predictor.
    pub fn new(mdp: &TabularMdp, initial: &Policy, config: &LoopConfig) -> Result<Self> {
        config.validate()?;
        initial.check_covers(mdp.tree())?;
        let initial = if config.trainer.unmasked() && !initial.has_obs_predictor() {
            initial.clone().with_uniform_obs_predictor()
        } else {
            initial.clone()
        };
        let mut state = IterationState {
            round: 0,
            main: initial.clone(),
            previous: None,
            exploration: initial.clone(),
            reference: initial.clone(),
            initial: initial.clone(),
            dataset: Vec::new(),
            metrics: Vec::new(),
            history: vec![initial],
            last_trace: Vec::new(),
        };
        let row = state.measure(mdp, config, 0, 0.0, None)?;
        state.metrics.push(row);
        state.exploration = exploration_policy(&state, config)?;
        Ok(state)
    }

    pub fn checkpoint(&self) -> RoundCheckpoint {
        RoundCheckpoint {
            round: self.round,
            main: self.main.checkpoint(),
            reference: self.reference.checkpoint(),
        }
    }

    fn measure(
        &self,
        mdp: &TabularMdp,
        config: &LoopConfig,
        pairs: usize,
        coverage: f64,
        warning: Option<String>,
    ) -> Result<RoundMetrics> {
        let eta = config.training.eta;
        let prev = self.previous.as_ref().unwrap_or(&self.initial);
        Ok(RoundMetrics {
            round: self.round,
            trainer: config.trainer.to_string(),
            reference_mode: config.reference_mode.to_string(),
            eta,
            pairs_collected: pairs,
            coverage,
            true_expected_utility: expected_utility(mdp, &self.main)?,
            kl_to_initial: expected_kl(mdp, &self.main, &self.initial)?,
            kl_to_previous: expected_kl(mdp, &self.main, prev)?,
            dataset_size: self.dataset.len(),
            kl_target_value: exact_expected_value(mdp, &self.main, &self.initial, eta)?,
            warning,
        })
    }
}

fn exploration_policy(state: &IterationState, config: &LoopConfig) -> Result<Policy> {
    Ok(match config.exploration {
        Exploration::OnPolicy | Exploration::WestOfN => state.main.clone(),
        Exploration::Mixture { .. } => match &state.previous {
            Some(p) => p.clone(),
            None => temperature_policy(&state.main, crate::online::FIRST_ROUND_TEMPERATURES[1])?,
        },
        Exploration::Temperature(t) => temperature_policy(&state.main, t)?,
    })
}

fn collect_batch<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    state: &IterationState,
    config: &LoopConfig,
    prompt: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    match config.exploration {
        Exploration::OnPolicy | Exploration::WestOfN => {
            let ts = (0..config.n)
                .map(|_| sample_from_prompt(mdp, &state.main, prompt, rng))
                .collect::<Result<_>>()?;
            Ok(SampleBatch::on_policy(prompt, ts))
        }
        Exploration::Mixture {
            n_current,
            n_previous,
        } => mixture_sampling(
            mdp,
            &state.main,
            state.previous.as_ref(),
            n_current,
            n_previous,
            prompt,
            rng,
        ),
        Exploration::Temperature(_) => {
            let half = config.n / 2;
            let mut trajectories = Vec::with_capacity(config.n);
            let mut sources = Vec::with_capacity(config.n);
            for i in 0..config.n {
                let (pol, tag) = if i < config.n - half {
                    (&state.main, Source::Current)
                } else {
                    (&state.exploration, Source::Variant(0))
                };
                trajectories.push(sample_from_prompt(mdp, pol, prompt, rng)?);
                sources.push(tag);
            }
            Ok(SampleBatch {
                prompt,
                trajectories,
                sources,
            })
        }
    }
}

fn objective<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    state: &IterationState,
    config: &LoopConfig,
    rng: &mut R,
) -> Result<Box<dyn Objective>> {
    let tree = mdp.tree();
    let training = TrainerConfig {
        mask_observations: !config.trainer.unmasked(),
        ..config.training.clone()
    };
    Ok(match config.trainer {
        TrainerKind::MDpo | TrainerKind::SingleTurnDpo => Box::new(DpoObjective::from_records(
            &state.dataset,
            state.reference.clone(),
            &training,
        )?),
        TrainerKind::MKto | TrainerKind::SingleTurnKto => {
            let data = LabeledData::from_records(tree, &state.dataset)?;
            Box::new(KtoObjective::new(
                mdp,
                data,
                state.reference.clone(),
                &training,
                rng.random(),
            )?)
        }
        TrainerKind::Raft => {
            let winners: Vec<_> = state.dataset.iter().map(|r| r.winner().clone()).collect();
            Box::new(NllObjective::new(
                &state.main,
                &winners,
                training.batch_size,
            )?)
        }
    })
}

/// One round: sample `m` prompts, collect and annotate, append to `D`, train
/// the main policy on all of `D` from its current logits, then roll the
/// reference and exploration policies forward.
pub fn run_iteration<R: Rng + ?Sized>(
    mut state: IterationState,
    mdp: &TabularMdp,
    utility: &UtilityFunction,
    config: &LoopConfig,
    rng: &mut R,
) -> Result<IterationState> {
    config.validate()?;
    let batches = (0..config.m)
        .map(|_| {
            let x = sample_categorical(mdp.prompt_distribution(), rng);
            collect_batch(mdp, &state, config, x, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let new_pairs = match config.exploration {
        Exploration::WestOfN => west_of_n_pairs(&batches, utility)?,
        _ => annotate_pairs(
            &batches,
            utility,
            &AnnotateOptions {
                label: config.label,
                ..AnnotateOptions::default()
            },
            rng,
        )?,
    };
    let pairs = new_pairs.len();
    state.dataset.extend(new_pairs);
    state.round += 1;

    let mut warning = None;
    let trained = if pairs == 0 {
        warning = Some(format!(
            "round {}: no usable pairs, training skipped",
            state.round
        ));
        state.main.clone()
    } else {
        let mut obj = objective(mdp, &state, config, rng)?;
        let out = train(obj.as_mut(), &state.main, &config.training)?;
        state.last_trace = out.trace;
        out.policy
    };
    if trained.has_obs_predictor() != state.main.has_obs_predictor() {
        return Err(CoreError::Structural(
            "training changed the policy's parameter layout".into(),
        ));
    }
    state.previous = Some(std::mem::replace(&mut state.main, trained));
    state.history.push(state.main.clone());
    let row = state.measure(mdp, config, pairs, pairs as f64 / config.m as f64, warning)?;
    state.metrics.push(row);
    state.reference = match config.reference_mode {
        ReferenceMode::Fixed => state.initial.clone(),
        ReferenceMode::Moving => state.main.clone(),
    };
    state.exploration = exploration_policy(&state, config)?;
    Ok(state)
}

/// `config.rounds` iterations from `initial`.
pub fn run_online<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    utility: &UtilityFunction,
    initial: &Policy,
    config: &LoopConfig,
    rng: &mut R,
) -> Result<IterationState> {
    let mut state = IterationState::new(mdp, initial, config)?;
    for _ in 0..config.rounds {
        state = run_iteration(state, mdp, utility, config, rng)?;
    }
    Ok(state)
}
