use std::path::Path;

use turnpref_core::env::EnvSpec;
use turnpref_core::kvdoc::{render, KvDoc};
use turnpref_core::online::{Exploration, LoopConfig, ReferenceMode, TrainerKind};
use turnpref_core::preference::LabelMode;
use turnpref_core::trainers::TrainerConfig;
use turnpref_core::{CoreError, Result};

/// Longest horizon the command line accepts.
pub const MAX_HORIZON: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct TheorySettings {
    pub rounds: usize,
    pub m: usize,
    pub c1: f64,
    pub delta: f64,
    pub utilities: usize,
    pub kernels: usize,
}

impl Default for TheorySettings {
    fn default() -> Self {
        TheorySettings {
            rounds: 200,
            m: 1,
            c1: 1.0,
            delta: 0.1,
            utilities: 4,
            kernels: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub etas: Vec<f64>,
    pub reference_modes: Vec<ReferenceMode>,
    pub explorations: Vec<Exploration>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            etas: vec![0.01, 0.1, 0.5],
            reference_modes: vec![ReferenceMode::Fixed, ReferenceMode::Moving],
            explorations: vec![Exploration::default()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditSettings {
    /// Trajectories drawn for the Chebyshev check.
    pub samples: usize,
    /// Random `(Q̂, comparator)` draws for the value decomposition.
    pub draws: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            samples: 10_000,
            draws: 100,
        }
    }
}

/// Fully resolved run configuration. Rendering it gives a document that
/// parses back to the same value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub seed: u64,
    pub looping: LoopConfig,
    pub theory: TheorySettings,
    pub sweep: SweepGrid,
    pub audit: AuditSettings,
}

/// Environment used when the document names none.
pub fn default_env() -> EnvSpec {
    EnvSpec {
        horizon: 3,
        actions_per_state: 3,
        num_prompts: 4,
        ..EnvSpec::preset("tool_tree").unwrap()
    }
}

pub fn default_loop() -> LoopConfig {
    LoopConfig {
        m: 32,
        training: TrainerConfig {
            eta: 0.1,
            learning_rate: 1.0,
            steps: 100,
            ..TrainerConfig::default()
        },
        ..LoopConfig::default()
    }
}

/// Command-line overrides applied on top of the document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub env: Option<String>,
    pub eta: Option<f64>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let doc = match path {
            Some(p) => KvDoc::from_file(p)?,
            None => KvDoc::default(),
        };
        Self::from_doc(doc, overrides)
    }

    #[cfg(test)]
    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        Self::from_doc(KvDoc::parse_str(text, "config")?, overrides)
    }

    pub fn from_doc(mut doc: KvDoc, overrides: &Overrides) -> Result<Self> {
        if let Some(name) = &overrides.env {
            doc.insert("env", name);
        }
        if let Some(eta) = overrides.eta {
            doc.insert("eta", eta);
        }
        if let Some(seed) = overrides.seed {
            doc.insert("seed", seed);
        }

        let preset: Option<String> = doc.take("env")?;
        let env_keys = doc.take_prefixed("env.");
        let mut env = match &preset {
            Some(name) => EnvSpec::preset(name)?,
            None => default_env(),
        };
        for (k, v) in &env_keys {
            set_env_field(&mut env, k, v)?;
        }
        if env.horizon > MAX_HORIZON {
            return Err(CoreError::Config(format!(
                "horizon {} exceeds the cap of {MAX_HORIZON}",
                env.horizon
            )));
        }

        let seed: u64 = doc.take("seed")?.ok_or_else(|| {
            CoreError::Config("a seed is required (config key `seed` or --seed)".into())
        })?;

        let d = default_loop();
        let t = &d.training;
        let training = TrainerConfig {
            eta: doc.take_or("eta", t.eta)?,
            learning_rate: doc.take_or("learning_rate", t.learning_rate)?,
            steps: doc.take_or("steps", t.steps)?,
            batch_size: doc.take_or("batch_size", t.batch_size)?,
            lambda_plus: doc.take_or("lambda_plus", t.lambda_plus)?,
            lambda_minus: doc.take_or("lambda_minus", t.lambda_minus)?,
            nll_weight: doc.take_or("nll_weight", t.nll_weight)?,
            mask_observations: t.mask_observations,
            outer_eta_in_kto: doc.take_or("outer_eta_in_kto", t.outer_eta_in_kto)?,
            z0_samples: doc.take_or("z0_samples", t.z0_samples)?,
        };
        let looping = LoopConfig {
            trainer: doc.take_or::<TrainerKind>("trainer", d.trainer)?,
            exploration: doc.take_or::<Exploration>("exploration", d.exploration)?,
            reference_mode: doc.take_or::<ReferenceMode>("reference_mode", d.reference_mode)?,
            rounds: doc.take_or("rounds", d.rounds)?,
            m: doc.take_or("m", d.m)?,
            n: doc.take_or("n", d.n)?,
            label: doc.take_or::<LabelMode>("label", d.label)?,
            training,
        };
        looping.validate()?;

        let th = TheorySettings::default();
        let theory = TheorySettings {
            rounds: doc.take_or("theory.rounds", th.rounds)?,
            m: doc.take_or("theory.m", th.m)?,
            c1: doc.take_or("theory.c1", th.c1)?,
            delta: doc.take_or("theory.delta", th.delta)?,
            utilities: doc.take_or("theory.utilities", th.utilities)?,
            kernels: doc.take_or("theory.kernels", th.kernels)?,
        };

        let g = SweepGrid::default();
        let sweep = SweepGrid {
            etas: doc.take_list("sweep.eta")?.unwrap_or(g.etas),
            reference_modes: doc
                .take_list("sweep.reference_mode")?
                .unwrap_or(g.reference_modes),
            explorations: doc
                .take_list("sweep.exploration")?
                .unwrap_or(g.explorations),
        };
        if sweep.etas.is_empty()
            || sweep.reference_modes.is_empty()
            || sweep.explorations.is_empty()
        {
            return Err(CoreError::Config("sweep axes must be non-empty".into()));
        }

        let a = AuditSettings::default();
        let audit = AuditSettings {
            samples: doc.take_or("audit.samples", a.samples)?,
            draws: doc.take_or("audit.draws", a.draws)?,
        };
        doc.finish()?;
        Ok(ExperimentConfig {
            env,
            seed,
            looping,
            theory,
            sweep,
            audit,
        })
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("env", self.env.family.to_string());
        for (k, v) in self.env.to_pairs() {
            if k != "family" {
                push(&format!("env.{k}"), v);
            }
        }
        push("seed", self.seed.to_string());
        let l = &self.looping;
        push("trainer", l.trainer.to_string());
        push("exploration", l.exploration.to_string());
        push("reference_mode", l.reference_mode.to_string());
        push("label", l.label.to_string());
        push("rounds", l.rounds.to_string());
        push("m", l.m.to_string());
        push("n", l.n.to_string());
        let t = &l.training;
        push("eta", t.eta.to_string());
        push("learning_rate", t.learning_rate.to_string());
        push("steps", t.steps.to_string());
        push("batch_size", t.batch_size.to_string());
        push("lambda_plus", t.lambda_plus.to_string());
        push("lambda_minus", t.lambda_minus.to_string());
        push("nll_weight", t.nll_weight.to_string());
        push("outer_eta_in_kto", t.outer_eta_in_kto.to_string());
        push("z0_samples", t.z0_samples.to_string());
        let th = &self.theory;
        push("theory.rounds", th.rounds.to_string());
        push("theory.m", th.m.to_string());
        push("theory.c1", th.c1.to_string());
        push("theory.delta", th.delta.to_string());
        push("theory.utilities", th.utilities.to_string());
        push("theory.kernels", th.kernels.to_string());
        let join = |items: Vec<String>| items.join(",");
        push(
            "sweep.eta",
            join(self.sweep.etas.iter().map(f64::to_string).collect()),
        );
        push(
            "sweep.reference_mode",
            join(
                self.sweep
                    .reference_modes
                    .iter()
                    .map(|r| r.to_string())
                    .collect(),
            ),
        );
        push(
            "sweep.exploration",
            join(
                self.sweep
                    .explorations
                    .iter()
                    .map(|e| e.to_string())
                    .collect(),
            ),
        );
        push("audit.samples", self.audit.samples.to_string());
        push("audit.draws", self.audit.draws.to_string());
        out
    }

    /// Manifest text: version header, command, then every resolved key.
    pub fn manifest(&self, command: &str) -> String {
        format!(
            "# turnpref {} (core {})\n# command: {command}\n{}",
            env!("CARGO_PKG_VERSION"),
            turnpref_core::VERSION,
            render(&self.to_pairs())
        )
    }
}

fn set_env_field(env: &mut EnvSpec, key: &str, value: &str) -> Result<()> {
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value.trim().parse().map_err(|e| CoreError::Parse {
            location: format!("env.{key}"),
            message: format!("bad value `{value}`: {e}"),
        })
    }
    match key {
        "horizon" => env.horizon = parse(key, value)?,
        "num_prompts" => env.num_prompts = parse(key, value)?,
        "actions_per_state" => env.actions_per_state = parse(key, value)?,
        "obs_per_step" => env.obs_per_step = parse(key, value)?,
        "utility_bound" => env.utility_bound = parse(key, value)?,
        "seed" => env.seed = parse(key, value)?,
        "noise" => env.noise = parse(key, value)?,
        "halt" => env.halt = parse(key, value)?,
        _ => {
            return Err(CoreError::Config(format!(
                "unknown environment key `env.{key}`"
            )))
        }
    }
    Ok(())
}
