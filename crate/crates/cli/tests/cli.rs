use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn turnpref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnpref"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = turnpref(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn plan_reference_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan");
    let o = ok(&[
        "plan",
        "--env",
        "tool_tree",
        "--eta",
        "1",
        "--out",
        path(&out),
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("prompt 0"));
    let text = fs::read_to_string(out.join("plan.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let root = &v["states"][0];
    let pi = root["policy"].as_array().unwrap();
    let best = pi.iter().map(|p| p.as_f64().unwrap()).fold(0.0, f64::max);
    assert!((best - 0.6503).abs() < 1e-3, "{best}");
    assert!((root["value"].as_f64().unwrap() - 0.3573).abs() < 1e-3);
    let (header, rows) = read_csv(&out.join("plan.csv"));
    assert_eq!(
        header,
        [
            "state",
            "step",
            "prompt",
            "action",
            "q",
            "probability",
            "value"
        ]
    );
    assert_eq!(rows.len(), 2 + 2 * 2);
    assert!(out.join("manifest.conf").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    assert_eq!(
        turnpref(&["plan", "--env", "maze", "--out", out])
            .status
            .code(),
        Some(2)
    );
    let o = turnpref(&["plan", "--eta", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
    assert_eq!(
        turnpref(&["plan", "--eta", "-0.5", "--out", out])
            .status
            .code(),
        Some(2)
    );
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "seed = 1\nwibble = 3\n").unwrap();
    let o = turnpref(&["iterate", "--config", path(&cfg), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wibble"));
    assert_eq!(turnpref(&["iterate", "--out", out]).status.code(), Some(2));
    assert_eq!(
        turnpref(&["--config", "/nonexistent/x.conf", "iterate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(turnpref(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn includes_resolve_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("base.conf"), "env = tool_tree\neta = 1\n").unwrap();
    fs::create_dir(dir.path().join("sub")).unwrap();
    fs::write(
        dir.path().join("sub/run.conf"),
        "include = ../base.conf\nseed = 2\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&[
        "plan",
        "--config",
        path(&dir.path().join("sub/run.conf")),
        "--out",
        path(&out),
    ]);
    let manifest = fs::read_to_string(out.join("manifest.conf")).unwrap();
    assert!(manifest.contains("eta = 1\n"));
    assert!(manifest.contains("env.horizon = 2\n"));
}

#[test]
fn iterate_is_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["iterate", "--seed", "11", "--out", path(&a)]);
    ok(&["iterate", "--seed", "11", "--out", path(&b)]);
    ok(&[
        "iterate",
        "--config",
        path(&a.join("manifest.conf")),
        "--out",
        path(&c),
    ]);
    let files = csv_files(&a);
    assert!(files.len() >= 2);
    for f in files {
        let rel = f.strip_prefix(&a).unwrap();
        let x = fs::read(&f).unwrap();
        assert_eq!(x, fs::read(b.join(rel)).unwrap(), "{rel:?}");
        assert_eq!(x, fs::read(c.join(rel)).unwrap(), "{rel:?}");
    }
    let (header, rows) = read_csv(&a.join("metrics.csv"));
    assert_eq!(header[0], "round");
    assert_eq!(header.len(), 11);
    assert_eq!(rows.len(), 4);
    assert!(a.join("checkpoints/round_3.json").exists());
}

#[test]
fn empty_rounds_warn_and_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sparse.conf");
    fs::write(
        &cfg,
        "seed = 0\nenv = tool_tree\nenv.horizon = 6\nenv.actions_per_state = 4\nexploration = on_policy\nm = 1\nn = 2\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = ok(&["iterate", "--config", path(&cfg), "--out", path(&out)]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(stderr.matches("warning").count(), 3, "{stderr}");
    let (_, rows) = read_csv(&out.join("metrics.csv"));
    assert!(rows.iter().all(|r| r[4] == "0"));
}

#[test]
fn theory_singleton_class_has_no_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.conf");
    fs::write(
        &cfg,
        "seed = 3\nenv = random\ntheory.rounds = 20\ntheory.utilities = 1\ntheory.kernels = 1\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["theory", "--config", path(&cfg), "--out", path(&out)]);
    let (header, rows) = read_csv(&out.join("regret.csv"));
    assert_eq!(
        &header[..7],
        [
            "round",
            "J_star",
            "J_main",
            "regret_cum",
            "uncertainty_score",
            "mle_u_index",
            "mle_p_index"
        ]
    );
    assert_eq!(rows.len(), 20);
    for r in rows {
        assert!(r[3].parse::<f64>().unwrap().abs() < 1e-12);
    }
}

#[test]
fn theory_default_run_is_deterministic_and_quick() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let start = std::time::Instant::now();
    ok(&[
        "theory",
        "--env",
        "random",
        "--seed",
        "4",
        "--out",
        path(&a),
    ]);
    assert!(start.elapsed().as_secs() < 300);
    ok(&[
        "theory",
        "--env",
        "random",
        "--seed",
        "4",
        "--out",
        path(&b),
    ]);
    assert_eq!(
        fs::read(a.join("regret.csv")).unwrap(),
        fs::read(b.join("regret.csv")).unwrap()
    );
    assert_eq!(read_csv(&a.join("regret.csv")).1.len(), 200);
}

#[test]
fn sweep_grid_and_best_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.conf");
    fs::write(
        &cfg,
        "seed = 1\nenv.horizon = 2\nrounds = 2\nm = 16\nsteps = 40\nsweep.eta = 0.01, 0.1, 0.5\nsweep.reference_mode = fixed, moving\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&[
        "sweep",
        "--config",
        path(&cfg),
        "--out",
        path(&out),
        "--jobs",
        "3",
    ]);
    let (header, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 6);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    // Re-scan each cell's metrics for the best final utility.
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for i in 0..6 {
        let (_, m) = read_csv(&out.join(format!("cell_{i:03}/metrics.csv")));
        let eu: f64 = m.last().unwrap()[6].parse().unwrap();
        assert_eq!(
            rows[i][col("final_true_expected_utility")]
                .parse::<f64>()
                .unwrap(),
            eu
        );
        if eu > best.1 {
            best = (i, eu);
        }
        assert_eq!(rows[i][col("status")], "ok");
    }
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[col("best")] == "true", i == best.0);
    }
    let seeds: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r[col("seed")].as_str()).collect();
    assert_eq!(seeds.len(), 6);

    // One cell re-run alone from its manifest reproduces its CSV.
    let again = dir.path().join("again");
    ok(&[
        "iterate",
        "--config",
        path(&out.join("cell_004/manifest.conf")),
        "--out",
        path(&again),
    ]);
    assert_eq!(
        fs::read(out.join("cell_004/metrics.csv")).unwrap(),
        fs::read(again.join("metrics.csv")).unwrap()
    );
}

#[test]
fn failed_cells_do_not_affect_others() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.conf");
    fs::write(&cfg, "seed = 1\nenv.horizon = 2\nrounds = 1\nm = 8\nsteps = 20\nsweep.eta = 0.1, -1\nsweep.reference_mode = moving\n")
        .unwrap();
    let out = dir.path().join("o");
    let o = ok(&["sweep", "--config", path(&cfg), "--out", path(&out)]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cell 1 failed"));
    let (_, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows[0][5], "ok");
    assert_eq!(rows[1][5], "failed");
    assert!(out.join("cell_000/metrics.csv").exists());

    fs::write(&cfg, "seed = 1\nsweep.eta = -1\n").unwrap();
    assert_eq!(
        turnpref(&["sweep", "--config", path(&cfg), "--out", path(&out)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn audit_outputs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&[
        "audit",
        "--env",
        "noisy_tool",
        "--eta",
        "0.5",
        "--seed",
        "1",
        "--out",
        path(&out),
    ]);
    let (_, summary) = read_csv(&out.join("audit.csv"));
    let get = |k: &str| {
        summary.iter().find(|r| r[0] == k).unwrap()[1]
            .parse::<f64>()
            .unwrap()
    };
    assert!(get("max_abs_residual") <= 1e-8);
    assert!(get("max_decomposition_error") <= 1e-8);
    assert!(get("chebyshev_fraction") >= 0.9);
    let (_, rows) = read_csv(&out.join("decomposition.csv"));
    assert_eq!(rows.len(), 100);
    for f in csv_files(&out) {
        let (header, rows) = read_csv(&f);
        assert!(!header.is_empty());
        assert!(rows.iter().all(|r| r.len() == header.len()));
    }
}
