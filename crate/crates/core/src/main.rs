use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flrw_sim::acceptance::run_suite;
use flrw_sim::config::RunConfig;
use flrw_sim::harness::{convergence_study, run};
use flrw_sim::SimError;

/// Near-FLRW Einstein-scalar-field evolutions on the 3-torus.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration and write diagnostics, snapshots and asymptotics.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Resolution and time-step convergence matrix.
    Converge {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        resolutions: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        dts: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Acceptance suite; the configuration supplies the perturbed run.
    Accept {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated coordinate times.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

fn load(path: &Path, common: &Common) -> Result<(RunConfig, PathBuf), SimError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(times) = &common.snapshot_times {
        cfg.output.snapshot_times = times.clone();
    }
    if let Some(dir) = &common.output_dir {
        cfg.output.dir = dir.clone();
    }
    cfg.validate()?;
    let dir = cfg.output.dir.clone();
    Ok((cfg, dir))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), SimError> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| SimError::Snapshot(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn execute(cli: Cli) -> Result<u8, SimError> {
    match cli.command {
        Command::Run { config, common } => {
            let (cfg, dir) = load(&config, &common)?;
            let out = run(&cfg, &dir)?;
            for r in &out.summary.rates {
                match r.rate {
                    Some(rate) => println!("rate {:<10} {rate:>9.4} (expected {:.2})", r.column, r.expected),
                    None => println!("rate {:<10} unavailable", r.column),
                }
            }
            for c in &out.summary.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", dir.display());
            Ok(if out.summary.all_passed() { 0 } else { EXIT_ACCEPTANCE })
        }
        Command::Converge {
            config,
            resolutions,
            dts,
            common,
        } => {
            let (cfg, dir) = load(&config, &common)?;
            let report = convergence_study(&cfg, &resolutions, &dts)?;
            println!("spatial errors {:?}", report.spatial_errors);
            println!("spatial ratios {:?}", report.spatial_ratios);
            println!("temporal orders {:?}", report.temporal_orders);
            write_json(&dir.join("convergence.json"), &report)?;
            Ok(0)
        }
        Command::Accept { config, common } => {
            let (cfg, dir) = load(&config, &common)?;
            let results = run_suite(&cfg);
            for r in &results {
                println!("{}", r.line());
            }
            write_json(&dir.join("acceptance.json"), &results)?;
            Ok(if results.iter().all(|r| r.passed) { 0 } else { EXIT_ACCEPTANCE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("FLRW_SIM_WORKERS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not size the worker pool: {e}");
                }
            }
            _ => {
                eprintln!("error: FLRW_SIM_WORKERS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SimError::Config(_) => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            })
        }
    }
}
