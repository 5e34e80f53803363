//! Run driver: initial data, evolution, diagnostics output, convergence
//! studies.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::background::{flrw_limits, FlrwParams};
use crate::config::RunConfig;
use crate::diagnostics::{
    causal_flip_times, extract_asymptotics, fit_decay_rate, AsymptoticData, DiagnosticsRecord,
    Trajectory,
};
use crate::error::{Result, SimError};
use crate::evolution::{evolve, stable_dt, EvolutionConfig};
use crate::grid::{sup, write_field, Field, Grid};
use crate::initial_data::build_initial_state;
use crate::state::State;

pub const CSV_SCHEMA: &str = "# flrw-diagnostics schema 1";

pub const CSV_COLUMNS: [&str; 21] = [
    "t",
    "hn_k",
    "hn_gamma",
    "hn_e",
    "hn_n",
    "hn_epsi",
    "sup_n",
    "sup_k",
    "sup_e0psi",
    "sup_gamma",
    "sup_e",
    "sup_epsi",
    "sup_psi",
    "energy",
    "ham_sup",
    "ham_l2",
    "mom_sup",
    "mom_l2",
    "q_min",
    "q_max",
    "trace_ratio",
];

pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let n = &r.norms;
    let vals = [
        r.t,
        n.k,
        n.gamma,
        n.e,
        n.n,
        n.epsi,
        n.n_sup,
        n.k_sup,
        n.e0psi_sup,
        n.gamma_sup,
        n.e_sup,
        n.eipsi_sup,
        n.psi_sup,
        r.energy,
        r.ham_sup,
        r.ham_l2,
        r.mom_sup,
        r.mom_l2,
        r.q_min,
        r.q_max,
        r.max_trace_ratio,
    ];
    let cells: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
    cells.join(",")
}

/// Rows of a diagnostics CSV keyed by column name order of [`CSV_COLUMNS`].
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line != CSV_COLUMNS.join(",") {
                return Err(SimError::Config(format!(
                    "{}:{}: unexpected header",
                    path.display(),
                    lineno + 1
                )));
            }
            header_seen = true;
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        let row = row.map_err(|e| {
            SimError::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if row.len() != CSV_COLUMNS.len() {
            return Err(SimError::Config(format!(
                "{}:{}: expected {} columns, got {}",
                path.display(),
                lineno + 1,
                CSV_COLUMNS.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn column(rows: &[Vec<f64>], name: &str) -> Vec<(f64, f64)> {
    let c = CSV_COLUMNS.iter().position(|&n| n == name).expect("known column");
    rows.iter().map(|r| (r[0], r[c])).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEntry {
    pub column: String,
    pub expected: f64,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Fitted decay rates over `window` (coordinate time) with their expected
/// multiples of H.
pub fn rate_table(rows: &[Vec<f64>], h: f64, window: (f64, f64)) -> Vec<RateEntry> {
    let expected = [
        ("sup_n", -2.0),
        ("sup_k", -2.0),
        ("sup_e0psi", -2.0),
        ("sup_gamma", -1.0),
        ("sup_e", -1.0),
        ("sup_epsi", -1.0),
    ];
    expected
        .iter()
        .map(|&(name, mult)| {
            let fit = fit_decay_rate(&column(rows, name), window);
            RateEntry {
                column: name.into(),
                expected: mult * h,
                rate: fit.as_ref().ok().map(|f| f.0),
                r_squared: fit.as_ref().ok().map(|f| f.1),
                error: fit.err().map(|e| e.to_string()),
            }
        })
        .collect()
}

/// Sup norms below this never left round-off, so a decay rate is meaningless.
const ROUNDOFF_NORM: f64 = 1e-10;
const ROUNDOFF_ENERGY: f64 = 1e-18;

/// Pass/fail checks that depend only on the diagnostics CSV.
pub fn checks_from_csv(
    rows: &[Vec<f64>],
    h: f64,
    window: (f64, f64),
    toggles: &crate::config::CheckToggles,
) -> (Vec<RateEntry>, Vec<Check>) {
    let rates = rate_table(rows, h, window);
    let mut checks = Vec::new();
    if toggles.decay_rates {
        for r in &rates {
            let peak = column(rows, &r.column).iter().map(|x| x.1).fold(0.0, f64::max);
            if peak <= ROUNDOFF_NORM {
                checks.push(Check {
                    name: format!("rate_{}", r.column),
                    passed: true,
                    detail: format!("at round-off throughout (max {peak:e}); no rate to fit"),
                });
                continue;
            }
            let passed = r
                .rate
                .is_some_and(|v| (v - r.expected).abs() <= 0.1 * r.expected.abs());
            checks.push(Check {
                name: format!("rate_{}", r.column),
                passed,
                detail: match r.rate {
                    Some(v) => format!("{v:.4} vs {:.4} ± 10%", r.expected),
                    None => r.error.clone().unwrap_or_default(),
                },
            });
        }
    }
    if toggles.energy {
        let e = column(rows, "energy");
        let e0 = e.first().map_or(0.0, |x| x.1);
        let max = e.iter().map(|x| x.1).fold(0.0, f64::max);
        checks.push(Check {
            name: "energy_bounded".into(),
            passed: max <= 10.0 * e0 || max <= ROUNDOFF_ENERGY,
            detail: format!("max {max:e} vs 10 x {e0:e}"),
        });
    }
    if toggles.constraints {
        let ham = column(rows, "ham_l2");
        let mom = column(rows, "mom_l2");
        let total: Vec<f64> = ham.iter().zip(&mom).map(|(a, b)| a.1 + b.1).collect();
        let c0 = total.first().copied().unwrap_or(0.0);
        let max = total.iter().copied().fold(0.0, f64::max);
        let bound = 10.0 * c0 + 1e-9;
        checks.push(Check {
            name: "constraint_propagation".into(),
            passed: max <= bound,
            detail: format!("max {max:e} vs bound {bound:e}"),
        });
    }
    (rates, checks)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub t1: f64,
    pub t2: f64,
    pub f_khat_asymmetry: f64,
    pub f_khat_trace: f64,
    pub sup_n_hat_inf: f64,
    pub sup_e_hat_inf: f64,
    pub sup_gamma_hat_inf: f64,
    pub sup_epsi_inf: f64,
    pub sup_f_khat: f64,
    pub sup_f_e0psi: f64,
    pub sup_k_hat_inf: f64,
    pub sup_e0psi_inf: f64,
    pub psi_rate: Option<f64>,
    pub psi_hat_rate: Option<f64>,
    pub flipped_points: usize,
    pub flip_time_min: Option<f64>,
    pub flip_time_median: Option<f64>,
    pub flip_time_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub grid: [usize; 3],
    pub seed: u64,
    pub steps: usize,
    pub t_final: f64,
    pub failure: Option<String>,
    pub rates: Vec<RateEntry>,
    pub checks: Vec<Check>,
    pub asymptotics: Option<AsymptoticSummary>,
    pub asymptotics_error: Option<String>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

/// Output of [`run`]: the on-disk summary plus the in-memory trajectory.
pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub asymptotics: Option<AsymptoticData>,
}

fn sup_all(fields: &[&Field]) -> f64 {
    fields.iter().map(|f| sup(f)).fold(0.0, f64::max)
}

/// `sup |ψ − ψ∞|` per record.
pub fn psi_deviation(traj: &Trajectory, psi_inf: &[f64]) -> Vec<(f64, f64)> {
    traj.records
        .iter()
        .map(|r| {
            let d = r
                .psi_hat
                .iter()
                .zip(psi_inf)
                .map(|(h, i)| (h + r.psi_flrw - i).abs())
                .fold(0.0, f64::max);
            (r.t, d)
        })
        .collect()
}

/// `sup |ψ̂ − ψ̂∞|` per record, with the background part removed.
pub fn psi_hat_deviation(traj: &Trajectory, params: &FlrwParams, psi_inf: &[f64]) -> Vec<(f64, f64)> {
    let psi_flrw_inf = flrw_limits(params).1;
    traj.records
        .iter()
        .map(|r| {
            let d = r
                .psi_hat
                .iter()
                .zip(psi_inf)
                .map(|(h, i)| (h - (i - psi_flrw_inf)).abs())
                .fold(0.0, f64::max);
            (r.t, d)
        })
        .collect()
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

pub fn summarize_asymptotics(
    a: &AsymptoticData,
    traj: &Trajectory,
    params: &FlrwParams,
    fit_window: (f64, f64),
) -> AsymptoticSummary {
    let e_hat: Vec<&Field> = a.e_hat_inf.iter().flatten().collect();
    let psi_rate = fit_decay_rate(&psi_deviation(traj, &a.psi_inf), fit_window)
        .ok()
        .map(|f| f.0);
    let psi_hat_rate = fit_decay_rate(&psi_hat_deviation(traj, params, &a.psi_inf), fit_window)
        .ok()
        .map(|f| f.0);
    let mut flips: Vec<f64> = causal_flip_times(traj).into_iter().flatten().collect();
    AsymptoticSummary {
        t1: a.t1,
        t2: a.t2,
        f_khat_asymmetry: a.f_khat_asymmetry,
        f_khat_trace: a.f_khat_trace,
        sup_n_hat_inf: sup(&a.n_hat_inf),
        sup_e_hat_inf: sup_all(&e_hat),
        sup_gamma_hat_inf: sup_all(&a.gamma_hat_inf.iter().collect::<Vec<_>>()),
        sup_epsi_inf: sup_all(&a.epsi_inf.iter().collect::<Vec<_>>()),
        sup_f_khat: sup_all(&a.f_khat.iter().collect::<Vec<_>>()),
        sup_f_e0psi: sup(&a.f_e0psi),
        sup_k_hat_inf: sup_all(&a.k_hat_inf.iter().collect::<Vec<_>>()),
        sup_e0psi_inf: sup(&a.e0psi_inf),
        psi_rate,
        psi_hat_rate,
        flipped_points: flips.len(),
        flip_time_min: flips.iter().copied().reduce(f64::min),
        flip_time_max: flips.iter().copied().reduce(f64::max),
        flip_time_median: median(&mut flips),
    }
}

fn write_field_file(path: &Path, grid: &Grid, f: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, grid.dims(), f)?;
    w.flush()?;
    Ok(())
}

fn write_asymptotics(dir: &Path, grid: &Grid, a: &AsymptoticData, s: &AsymptoticSummary) -> Result<()> {
    let fdir = dir.join("asymptotics");
    fs::create_dir_all(&fdir)?;
    const SYM: [&str; 6] = ["11", "22", "33", "12", "13", "23"];
    for (i, name) in SYM.iter().enumerate() {
        write_field_file(&fdir.join(format!("g_inf_{name}.bin")), grid, &a.g_inf[i])?;
        write_field_file(&fdir.join(format!("f_khat_{name}.bin")), grid, &a.f_khat[i])?;
        write_field_file(&fdir.join(format!("k_hat_inf_{name}.bin")), grid, &a.k_hat_inf[i])?;
    }
    write_field_file(&fdir.join("psi_inf.bin"), grid, &a.psi_inf)?;
    write_field_file(&fdir.join("f_e0psi.bin"), grid, &a.f_e0psi)?;
    write_field_file(&fdir.join("e0psi_inf.bin"), grid, &a.e0psi_inf)?;
    write_field_file(&fdir.join("n_hat_inf.bin"), grid, &a.n_hat_inf)?;

    let json = serde_json::to_value(s).map_err(|e| SimError::Snapshot(e.to_string()))?;
    let mut text = String::from("# asymptotic data at future infinity\n");
    if let serde_json::Value::Object(m) = json {
        for (k, v) in m {
            text.push_str(&format!("{k} = {v}\n"));
        }
    }
    fs::write(dir.join("asymptotics.txt"), text)?;
    Ok(())
}

fn snapshot_name(t: f64) -> String {
    format!("state_t{t:010.5}.bin")
}

/// Runs the full pipeline and writes every artifact under `out_dir`.
/// Evolution failures are recorded in `run.json` and then returned.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let params = cfg.background;
    let grid = cfg.grid.build()?;
    let recipe = cfg.recipe();
    let h = params.hubble();
    fs::write(out_dir.join("config.toml"), cfg.to_toml())?;

    let s0 = build_initial_state(&params, &recipe, &grid)?;
    let csv_path = out_dir.join("diagnostics.csv");
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "{CSV_SCHEMA}")?;
    writeln!(csv, "{}", CSV_COLUMNS.join(","))?;
    let snap_times = cfg.all_snapshot_times();
    let result = evolve(&s0, &params, &cfg.evolution, &snap_times, &mut |r| {
        writeln!(csv, "{}", csv_row(r))?;
        Ok(())
    });
    csv.flush()?;
    drop(csv);

    let rows = read_csv(&csv_path)?;
    let fit_window = (cfg.output.fit_window.0 / h, cfg.output.fit_window.1 / h);
    let (rates, checks) = checks_from_csv(&rows, h, fit_window, &cfg.checks);
    let mut summary = RunSummary {
        schema: 1,
        grid: grid.dims(),
        seed: recipe.seed,
        steps: 0,
        t_final: rows.last().map_or(0.0, |r| r[0]),
        failure: None,
        rates,
        checks,
        asymptotics: None,
        asymptotics_error: None,
    };
    let write_summary = |s: &RunSummary| -> Result<()> {
        let text = serde_json::to_string_pretty(s).map_err(|e| SimError::Snapshot(e.to_string()))?;
        fs::write(out_dir.join("run.json"), text + "\n")?;
        Ok(())
    };

    let traj = match result {
        Ok(t) => t,
        Err(e) => {
            summary.failure = Some(e.to_string());
            write_summary(&summary)?;
            return Err(e);
        }
    };
    summary.steps = traj.steps;

    if cfg.output.write_snapshots && !traj.snapshots.is_empty() {
        let sdir = out_dir.join("snapshots");
        fs::create_dir_all(&sdir)?;
        for s in &traj.snapshots {
            let mut w = BufWriter::new(File::create(sdir.join(snapshot_name(s.t)))?);
            s.write_snapshot(&mut w)?;
            w.flush()?;
        }
    }

    let window = (
        cfg.output.extraction_window.0 / h,
        cfg.output.extraction_window.1 / h,
    );
    let asym = match extract_asymptotics(&traj, &params, window) {
        Ok(a) => {
            let s = summarize_asymptotics(&a, &traj, &params, fit_window);
            write_asymptotics(out_dir, &grid, &a, &s)?;
            summary.asymptotics = Some(s);
            Some(a)
        }
        Err(e) => {
            summary.asymptotics_error = Some(e.to_string());
            None
        }
    };
    write_summary(&summary)?;
    Ok(RunOutput {
        summary,
        trajectory: traj,
        asymptotics: asym,
    })
}

/// Reads every snapshot written by [`run`], sorted by time.
pub fn load_snapshots(out_dir: &Path) -> Result<Vec<State>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(out_dir.join("snapshots"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| State::read_snapshot(&mut BufReader::new(File::open(p)?)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub resolutions: Vec<usize>,
    /// Sup error of each resolution against the finest.
    pub spatial_errors: Vec<f64>,
    /// Ratios of consecutive spatial errors.
    pub spatial_ratios: Vec<f64>,
    pub dts: Vec<f64>,
    /// `sup |u(dt_i) − u(dt_{i+1})|`.
    pub temporal_differences: Vec<f64>,
    /// Self-convergence orders from consecutive difference pairs.
    pub temporal_orders: Vec<f64>,
}

fn final_state(cfg: &RunConfig, grid: &Grid, evo: &EvolutionConfig) -> Result<State> {
    let s0 = build_initial_state(&cfg.background, &cfg.recipe(), grid)?;
    let traj = evolve(&s0, &cfg.background, evo, &[], &mut |_| Ok(()))?;
    Ok(traj.final_state.expect("evolve sets the final state"))
}

/// `sup |a − b|` over all components, with `b` on a grid that is an integer
/// refinement of `a`'s.
pub fn state_difference(a: &State, b: &State) -> Result<f64> {
    let (da, db) = (a.grid.dims(), b.grid.dims());
    let mut ratio = [1usize; 3];
    for i in 0..3 {
        if db[i] % da[i] != 0 {
            return Err(SimError::InvalidParameter(format!(
                "grid {db:?} does not refine {da:?}"
            )));
        }
        ratio[i] = db[i] / da[i];
    }
    let mut err = 0.0f64;
    for (ca, cb) in a.comps.iter().zip(&b.comps) {
        for i in 0..da[0] {
            for j in 0..da[1] {
                for k in 0..da[2] {
                    let pa = (i * da[1] + j) * da[2] + k;
                    let pb = ((i * ratio[0]) * db[1] + j * ratio[1]) * db[2] + k * ratio[2];
                    err = err.max((ca[pa] - cb[pb]).abs());
                }
            }
        }
    }
    Ok(err)
}

/// Runs the resolution and time-step matrix at the configured `t_end`.
/// Resolutions replace the point count of every active axis; all of them
/// share the time step of the finest grid.
pub fn convergence_study(
    cfg: &RunConfig,
    resolutions: &[usize],
    dts: &[f64],
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if resolutions.len() < 2 && dts.len() < 3 {
        return Err(SimError::InvalidParameter(
            "need at least two resolutions or three time steps".into(),
        ));
    }
    let mut res = resolutions.to_vec();
    res.sort_unstable();
    let grids: Vec<Grid> = res
        .iter()
        .map(|&n| Grid::new(cfg.grid.n.map(|m| if m > 1 { n } else { 1 })))
        .collect::<Result<_>>()?;

    let mut spatial_errors = Vec::new();
    if let Some(finest) = grids.last() {
        let probe = State::zeros(finest, 0.0);
        let mut evo = cfg.evolution.clone();
        if evo.fixed_dt.is_none() {
            evo.fixed_dt = Some(stable_dt(&probe, &cfg.background, &cfg.evolution));
        }
        let states: Vec<State> = grids
            .iter()
            .map(|g| final_state(cfg, g, &evo))
            .collect::<Result<_>>()?;
        let reference = states.last().expect("nonempty");
        for s in &states[..states.len() - 1] {
            spatial_errors.push(state_difference(s, reference)?);
        }
    }
    let spatial_ratios = spatial_errors.windows(2).map(|w| w[0] / w[1]).collect();

    let mut dts_sorted = dts.to_vec();
    dts_sorted.sort_by(|a, b| b.total_cmp(a));
    let grid = cfg.grid.build()?;
    let finals: Vec<State> = dts_sorted
        .iter()
        .map(|&dt| {
            let evo = EvolutionConfig {
                fixed_dt: Some(dt),
                ..cfg.evolution.clone()
            };
            final_state(cfg, &grid, &evo)
        })
        .collect::<Result<_>>()?;
    let temporal_differences: Vec<f64> = finals
        .windows(2)
        .map(|w| state_difference(&w[0], &w[1]))
        .collect::<Result<_>>()?;
    let temporal_orders = temporal_differences
        .windows(2)
        .zip(dts_sorted.windows(2))
        .map(|(d, h)| (d[0] / d[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok(ConvergenceReport {
        t: cfg.evolution.t_end,
        resolutions: res,
        spatial_errors,
        spatial_ratios,
        dts: dts_sorted,
        temporal_differences,
        temporal_orders,
    })
}
