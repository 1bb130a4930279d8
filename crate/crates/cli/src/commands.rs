use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use turnpref_core::env::{build_environment, enumerate_trajectories, Policy, TabularMdp};
use turnpref_core::online::{run_iteration, write_metrics_csv, IterationState, RoundMetrics};
use turnpref_core::planner::{
    audit_optimality_condition, chebyshev_bound_check, solve_kl_regularized, value_decomposition,
    PlanExport,
};
use turnpref_core::preference::{write_records, UtilityFunction};
use turnpref_core::theory::{run_theoretical_loop, ModelClass, TheoryConfig};
use turnpref_core::trainers::write_trace_csv;
use turnpref_core::{CoreError, Result};

use crate::config::ExperimentConfig;

/// Shortest round-trip decimal, exponent form for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn prepare(out: &Path, cfg: &ExperimentConfig, command: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.conf"), cfg.manifest(command))?;
    Ok(())
}

fn environment(cfg: &ExperimentConfig) -> Result<TabularMdp> {
    build_environment(&cfg.env)
}

pub fn plan(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mdp = environment(cfg)?;
    let eta = cfg.looping.training.eta;
    let plan = solve_kl_regularized(&mdp, &Policy::uniform(mdp.tree()), eta)?;
    prepare(out, cfg, "plan")?;
    let export = PlanExport::new(&mdp, &plan);
    fs::write(out.join("plan.json"), export.to_json()?)?;

    let mut w = csv::Writer::from_writer(create(&out.join("plan.csv"))?);
    w.write_record([
        "state",
        "step",
        "prompt",
        "action",
        "q",
        "probability",
        "value",
    ])?;
    for s in &export.states {
        for (a, (q, p)) in s.q.iter().zip(&s.policy).enumerate() {
            w.write_record([
                s.state.to_string(),
                s.step.to_string(),
                s.prompt.to_string(),
                a.to_string(),
                num(*q),
                num(*p),
                num(s.value),
            ])?;
        }
    }
    w.flush()?;

    let tree = mdp.tree();
    for x in 0..tree.num_prompts() {
        let root = tree.root(x);
        let probs: Vec<String> = plan
            .optimal_policy()
            .row_probs(root)
            .iter()
            .map(|p| format!("{p:.4}"))
            .collect();
        println!(
            "prompt {x}: V1 = {:.4}  pi1 = [{}]",
            plan.v_table()[root.0],
            probs.join(", ")
        );
    }
    Ok(())
}

/// Runs the practical loop into `out` and returns the final metrics row.
pub fn iterate(cfg: &ExperimentConfig, out: &Path) -> Result<RoundMetrics> {
    let mdp = environment(cfg)?;
    let utility = UtilityFunction::of_environment(&mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    prepare(out, cfg, "iterate")?;
    let ck_dir = out.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;

    let mut state = IterationState::new(&mdp, &Policy::uniform(mdp.tree()), &cfg.looping)?;
    let mut traces = Vec::new();
    for _ in 0..cfg.looping.rounds {
        state = run_iteration(state, &mdp, &utility, &cfg.looping, &mut rng)?;
        let row = state.metrics.last().unwrap();
        if let Some(w) = &row.warning {
            eprintln!("warning: {w}");
        }
        let ck = serde_json::to_string_pretty(&state.checkpoint())?;
        fs::write(ck_dir.join(format!("round_{}.json", state.round)), ck)?;
        traces.push((state.round, std::mem::take(&mut state.last_trace)));
    }
    write_metrics_csv(&state.metrics, create(&out.join("metrics.csv"))?)?;
    for (round, trace) in &traces {
        if !trace.is_empty() {
            write_trace_csv(
                trace,
                create(&out.join(format!("trace_round_{round}.csv")))?,
            )?;
        }
    }
    write_records(&state.dataset, create(&out.join("dataset.txt"))?)?;
    Ok(state.metrics.last().unwrap().clone())
}

pub fn theory(cfg: &ExperimentConfig, out: &Path) -> Result<f64> {
    let mdp = environment(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let th = &cfg.theory;
    let class = ModelClass::realizable(&mdp, th.utilities, th.kernels, &mut rng)?;
    let config = TheoryConfig {
        rounds: th.rounds,
        eta: cfg.looping.training.eta,
        m: th.m,
        c1: th.c1,
        delta: th.delta,
    };
    prepare(out, cfg, "theory")?;
    let ledger = run_theoretical_loop(
        &mdp,
        &class,
        &Policy::uniform(mdp.tree()),
        &config,
        &mut rng,
    )?;
    ledger.write_csv(create(&out.join("regret.csv"))?)?;
    println!(
        "rounds {}: cumulative regret {:.6}, average {:.6}, coverage {:.3}",
        th.rounds,
        ledger.cumulative_regret(),
        ledger.average_regret(th.rounds).unwrap_or(0.0),
        ledger.coverage()
    );
    Ok(ledger.cumulative_regret())
}

/// Seed of sweep cell `index`, derived from the master seed.
pub fn cell_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub index: usize,
    pub config: ExperimentConfig,
    pub result: std::result::Result<RoundMetrics, String>,
}

pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut cells = Vec::new();
    for &eta in &cfg.sweep.etas {
        for &mode in &cfg.sweep.reference_modes {
            for &exploration in &cfg.sweep.explorations {
                let mut c = cfg.clone();
                c.looping.training.eta = eta;
                c.looping.reference_mode = mode;
                c.looping.exploration = exploration;
                c.seed = cell_seed(cfg.seed, cells.len());
                cells.push(c);
            }
        }
    }
    cells
}

/// Runs every cell; returns the outcomes and the best successful cell.
pub fn sweep(
    cfg: &ExperimentConfig,
    out: &Path,
    jobs: usize,
) -> Result<(Vec<CellOutcome>, Option<usize>)> {
    prepare(out, cfg, "sweep")?;
    let cells = sweep_cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CoreError::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .into_par_iter()
            .enumerate()
            .map(|(index, config)| {
                let dir = cell_dir(out, index);
                let result = iterate(&config, &dir).map_err(|e| e.to_string());
                CellOutcome {
                    index,
                    config,
                    result,
                }
            })
            .collect()
    });

    let mut best: Option<(usize, f64)> = None;
    for o in &outcomes {
        if let Ok(m) = &o.result {
            if best.is_none_or(|(_, v)| m.true_expected_utility > v) {
                best = Some((o.index, m.true_expected_utility));
            }
        }
    }
    let best = best.map(|(i, _)| i);

    let mut w = csv::Writer::from_writer(create(&out.join("summary.csv"))?);
    w.write_record([
        "cell",
        "eta",
        "reference_mode",
        "exploration",
        "seed",
        "status",
        "final_true_expected_utility",
        "final_kl_target_value",
        "best",
        "message",
    ])?;
    for o in &outcomes {
        let l = &o.config.looping;
        let (status, eu, kl, msg) = match &o.result {
            Ok(m) => (
                "ok",
                num(m.true_expected_utility),
                num(m.kl_target_value),
                String::new(),
            ),
            Err(e) => ("failed", String::new(), String::new(), e.clone()),
        };
        w.write_record([
            o.index.to_string(),
            num(l.training.eta),
            l.reference_mode.to_string(),
            l.exploration.to_string(),
            o.config.seed.to_string(),
            status.to_string(),
            eu,
            kl,
            (Some(o.index) == best).to_string(),
            msg,
        ])?;
    }
    w.flush()?;
    Ok((outcomes, best))
}

pub fn cell_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("cell_{index:03}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditSummary {
    pub max_residual: f64,
    pub max_abs_term_c: f64,
    pub chebyshev_fraction: f64,
    pub max_decomposition_error: f64,
}

pub fn audit(cfg: &ExperimentConfig, out: &Path) -> Result<AuditSummary> {
    let mdp = environment(cfg)?;
    let eta = cfg.looping.training.eta;
    let tree = mdp.tree();
    let reference = Policy::uniform(tree);
    let plan = solve_kl_regularized(&mdp, &reference, eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    prepare(out, cfg, "audit")?;

    let mut w = csv::Writer::from_writer(create(&out.join("optimality.csv"))?);
    w.write_record([
        "prompt",
        "trajectory",
        "probability",
        "utility",
        "term_a",
        "term_b",
        "term_c",
        "residual",
    ])?;
    let (mut max_residual, mut max_c) = (0.0f64, 0.0f64);
    for (traj, p) in enumerate_trajectories(&mdp, plan.optimal_policy())? {
        let t = audit_optimality_condition(&mdp, &plan, &reference, eta, &traj)?;
        max_residual = max_residual.max(t.residual.abs());
        max_c = max_c.max(t.term_c.abs());
        w.write_record([
            traj.prompt().to_string(),
            traj.encode(),
            num(p),
            num(mdp.utility(traj.terminal_sa(tree))),
            num(t.term_a),
            num(t.term_b),
            num(t.term_c),
            num(t.residual),
        ])?;
    }
    w.flush()?;

    let cheb = chebyshev_bound_check(
        &mdp,
        &plan,
        plan.optimal_policy(),
        cfg.audit.samples,
        &mut rng,
    )?;
    if let Some(d) = &cheb.diagnostic {
        eprintln!("note: {d}");
    }

    let mut w = csv::Writer::from_writer(create(&out.join("decomposition.csv"))?);
    w.write_record([
        "draw",
        "lhs",
        "utility_difference",
        "bellman_residuals",
        "kl_term",
        "rhs",
        "abs_error",
    ])?;
    let mut max_err = 0.0f64;
    for draw in 0..cfg.audit.draws {
        let q_hat: Vec<f64> = (0..tree.num_sa())
            .map(|_| rng.random::<f64>() * mdp.bound())
            .collect();
        let logits = (0..tree.num_sa())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let comparator = Policy::from_logits(tree, logits)?;
        let d = value_decomposition(&mdp, &q_hat, &reference, eta, &comparator)?;
        let rhs = d.rhs.sum();
        let err = (d.lhs - rhs).abs();
        max_err = max_err.max(err);
        w.write_record([
            draw.to_string(),
            num(d.lhs),
            num(d.rhs.utility_difference),
            num(d.rhs.bellman_residuals),
            num(d.rhs.kl_term),
            num(rhs),
            num(err),
        ])?;
    }
    w.flush()?;

    let summary = AuditSummary {
        max_residual,
        max_abs_term_c: max_c,
        chebyshev_fraction: cheb.fraction_within_bound,
        max_decomposition_error: max_err,
    };
    let mut w = csv::Writer::from_writer(create(&out.join("audit.csv"))?);
    w.write_record(["check", "value"])?;
    w.write_record(["max_abs_residual", &num(summary.max_residual)])?;
    w.write_record(["max_abs_term_c", &num(summary.max_abs_term_c)])?;
    w.write_record(["chebyshev_fraction", &num(summary.chebyshev_fraction)])?;
    w.write_record(["chebyshev_samples", &cheb.samples.to_string()])?;
    w.write_record([
        "max_decomposition_error",
        &num(summary.max_decomposition_error),
    ])?;
    w.flush()?;
    println!(
        "max |u - (A + B + C)| = {:.3e}, max |C| = {:.3e}, chebyshev fraction = {:.4}, max decomposition error = {:.3e}",
        summary.max_residual, summary.max_abs_term_c, summary.chebyshev_fraction, summary.max_decomposition_error
    );
    Ok(summary)
}
