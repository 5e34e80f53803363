use std::fs;
use std::path::Path;
use std::process::Command;

use flrw_sim::config::RunConfig;
use flrw_sim::diagnostics::total_energy;
use flrw_sim::harness::{load_snapshots, read_csv, run, CSV_COLUMNS, CSV_SCHEMA};
use flrw_sim::initial_data::{DataRecipe, Mode};

fn short_config() -> RunConfig {
    let mut cfg = RunConfig::acceptance_default();
    cfg.grid.n = [16, 1, 1];
    cfg.evolution.t_end = 1.0;
    cfg.evolution.dt_cfl_factor = 0.5;
    cfg.output.snapshot_times = vec![0.5, 1.0];
    cfg
}

/// Random phases, so the seed matters.
fn seeded_config(seed: u64) -> RunConfig {
    let mut cfg = short_config();
    cfg.data = DataRecipe::conformal(
        1e-3,
        (1..=3)
            .map(|k| Mode {
                wavevector: [k, 0, 0],
                coefficient: 1.0 / k as f64,
                phase: None,
            })
            .collect(),
    );
    cfg.seed = Some(seed);
    cfg
}

fn csv_bytes(dir: &Path) -> Vec<u8> {
    fs::read(dir.join("diagnostics.csv")).unwrap()
}

#[test]
fn same_seed_gives_identical_diagnostics() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&seeded_config(11), a.path()).unwrap();
    run(&seeded_config(11), b.path()).unwrap();
    run(&seeded_config(12), c.path()).unwrap();
    assert_eq!(csv_bytes(a.path()), csv_bytes(b.path()));
    assert_ne!(csv_bytes(a.path()), csv_bytes(c.path()));
}

#[test]
fn csv_is_stamped_and_finite() {
    let dir = tempfile::tempdir().unwrap();
    run(&short_config(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_SCHEMA));
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    let rows = read_csv(&dir.path().join("diagnostics.csv")).unwrap();
    assert!(rows.len() > 3);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
    for name in ["config.toml", "run.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let saved = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(saved, short_config());
}

#[test]
fn energy_recomputed_from_snapshots_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config();
    run(&cfg, dir.path()).unwrap();
    let rows = read_csv(&dir.path().join("diagnostics.csv")).unwrap();
    let energy_col = CSV_COLUMNS.iter().position(|c| *c == "energy").unwrap();
    let snaps = load_snapshots(dir.path()).unwrap();
    assert_eq!(snaps.len(), 2);
    for s in &snaps {
        let row = rows.iter().find(|r| r[0] == s.t).expect("row at snapshot time");
        let e = total_energy(s, cfg.evolution.n_sobolev, &cfg.background);
        assert_eq!(e.to_bits(), row[energy_col].to_bits(), "t = {}", s.t);
    }
}

#[test]
fn one_dimensional_profile_embeds_in_three_dimensions() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let line = short_config();
    let mut cube = short_config();
    cube.grid.n = [16, 4, 4];
    run(&line, a.path()).unwrap();
    run(&cube, b.path()).unwrap();
    let ra = read_csv(&a.path().join("diagnostics.csv")).unwrap();
    let rb = read_csv(&b.path().join("diagnostics.csv")).unwrap();
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        for (col, (u, v)) in CSV_COLUMNS.iter().zip(x.iter().zip(y)) {
            // The transverse transforms add O(eps) noise to rates that are
            // differences of O(1) terms, so small columns agree absolutely.
            let ok = (u - v).abs() <= 1e-12 * u.abs().max(v.abs()).max(1.0);
            assert!(ok, "{col}: {u:e} vs {v:e}");
        }
    }
}

#[test]
fn exact_flrw_run_stays_at_round_off() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_config();
    cfg.data = DataRecipe::exact_flrw();
    let out = run(&cfg, dir.path()).unwrap();
    assert!(out.summary.all_passed(), "{:?}", out.summary.checks);
    let rows = read_csv(&dir.path().join("diagnostics.csv")).unwrap();
    for (i, col) in CSV_COLUMNS.iter().enumerate() {
        if col.starts_with("hn_") || col.starts_with("sup_") {
            assert!(rows.iter().all(|r| r[i] <= 1e-10), "{col}");
        }
    }
}

#[test]
fn perturbed_run_reports_k_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&RunConfig::acceptance_default(), dir.path()).unwrap();
    let k = out.summary.rates.iter().find(|r| r.column == "sup_k").unwrap();
    let rate = k.rate.unwrap();
    assert!((-2.2..=-1.8).contains(&rate), "{rate}");
    assert!(out.summary.asymptotics.is_some());
    assert!(dir.path().join("asymptotics.txt").exists());
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_flrw-sim"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let write = |name: &str, cfg: &RunConfig| {
        let p = dir.path().join(name);
        fs::write(&p, cfg.to_toml()).unwrap();
        p.to_str().unwrap().to_string()
    };

    let mut flat = short_config();
    flat.data = DataRecipe::exact_flrw();
    let ok = write("flat.toml", &flat);
    assert_eq!(cli(&["run", &ok, "--output-dir", out]), 0);
    assert_eq!(cli(&["run", &ok, "--output-dir", out, "--snapshot-times", "0.25,0.75"]), 0);
    assert!(Path::new(out).join("snapshots").read_dir().unwrap().count() >= 2);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, flat.to_toml() + "\nunknown_key = 1\n").unwrap();
    assert_eq!(cli(&["run", bad.to_str().unwrap(), "--output-dir", out]), 2);
    assert_eq!(cli(&["run", "/nonexistent/config.toml"]), 2);

    let mut hopeless = short_config();
    hopeless.data.amplitude = 0.9;
    hopeless.data.max_newton = 1;
    let hopeless = write("hopeless.toml", &hopeless);
    assert_eq!(cli(&["run", &hopeless, "--output-dir", out]), 3);

    assert_eq!(
        cli(&["converge", &ok, "--output-dir", out, "--resolutions", "8,16"]),
        0
    );
    assert!(Path::new(out).join("convergence.json").exists());
}
