//! Run configuration, read from TOML. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::background::FlrwParams;
use crate::error::{Result, SimError};
use crate::evolution::EvolutionConfig;
use crate::grid::Grid;
use crate::initial_data::DataRecipe;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Points per axis; 1 marks an inactive axis.
    pub n: [usize; 3],
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Write every snapshot to disk (they are always kept in memory).
    #[serde(default = "yes")]
    pub write_snapshots: bool,
    /// Decay-rate fit window in units of 1/H.
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
    /// Asymptotic extraction window in units of 1/H.
    #[serde(default = "default_extraction_window")]
    pub extraction_window: (f64, f64),
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn yes() -> bool {
    true
}
fn default_fit_window() -> (f64, f64) {
    (2.0, 6.0)
}
fn default_extraction_window() -> (f64, f64) {
    (4.0, 8.0)
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_times: Vec::new(),
            write_snapshots: true,
            fit_window: default_fit_window(),
            extraction_window: default_extraction_window(),
        }
    }
}

/// Checks evaluated on a run and written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckToggles {
    #[serde(default = "yes")]
    pub decay_rates: bool,
    #[serde(default = "yes")]
    pub energy: bool,
    #[serde(default = "yes")]
    pub constraints: bool,
}

impl Default for CheckToggles {
    fn default() -> Self {
        Self {
            decay_rates: true,
            energy: true,
            constraints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub background: FlrwParams,
    pub grid: GridSpec,
    pub data: DataRecipe,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub checks: CheckToggles,
    /// Overrides `data.seed` when set.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: SimError| SimError::Config(e.to_string());
        self.background.validate().map_err(wrap)?;
        self.grid.build().map_err(wrap)?;
        self.data.validate().map_err(wrap)?;
        self.evolution.validate().map_err(wrap)?;
        for (name, (lo, hi)) in [
            ("fit_window", self.output.fit_window),
            ("extraction_window", self.output.extraction_window),
        ] {
            if !(lo < hi && lo >= 0.0) {
                return Err(SimError::Config(format!("{name} must satisfy 0 <= lo < hi")));
            }
        }
        if self.output.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(SimError::Config("snapshot times must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// The recipe with the top-level seed applied.
    pub fn recipe(&self) -> DataRecipe {
        let mut r = self.data.clone();
        if let Some(s) = self.seed {
            r.seed = s;
        }
        r
    }

    /// Snapshot times in coordinate time, including the extraction window
    /// sampled every 0.5/H.
    pub fn all_snapshot_times(&self) -> Vec<f64> {
        let h = self.background.hubble();
        let (lo, hi) = self.output.extraction_window;
        let mut times: Vec<f64> = self.output.snapshot_times.clone();
        let mut k = 0;
        loop {
            let t = (lo + 0.5 * k as f64) / h;
            if t > hi / h + 1e-12 || t > self.evolution.t_end + 1e-12 {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        times
    }

    /// Default acceptance profile: Λ = 3, a0 = 1, φ = 3, one effective
    /// dimension with 64 points, δφ = 1e-3 sin x¹, t_end = 8.
    pub fn acceptance_default() -> Self {
        Self {
            background: FlrwParams::new(3.0, 1.0, 0.0, 3.0).expect("valid"),
            grid: GridSpec { n: [64, 1, 1] },
            data: DataRecipe::conformal(
                1e-3,
                vec![crate::initial_data::Mode {
                    wavevector: [1, 0, 0],
                    coefficient: 1.0,
                    phase: Some(0.0),
                }],
            ),
            evolution: EvolutionConfig {
                dt_cfl_factor: 0.125,
                t_end: 8.0,
                ..EvolutionConfig::default()
            },
            output: OutputSpec::default(),
            checks: CheckToggles::default(),
            seed: None,
        }
    }
}
