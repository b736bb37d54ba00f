//! Experiment configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use consensim::cost::{geometric_grid, linear_grid};
use consensim::sim::PathConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "CONSENSIM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub geometric: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: 0.01,
            max: 1.0,
            count: 40,
            geometric: true,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        let grid = if self.geometric {
            geometric_grid(self.min, self.max, self.count)
        } else {
            linear_grid(self.min, self.max, self.count)
        };
        grid.map_err(|e| CliError::Config(format!("rho grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub constants: PathBuf,
    pub curves: PathBuf,
    pub report: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            constants: PathBuf::from("constants.json"),
            curves: PathBuf::from("curves.csv"),
            report: PathBuf::from("validation.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_list: Vec<u32>,
    pub grid: GridSpec,
    /// Intervals per agent count when estimating constants.
    pub replications: u64,
    pub step: f64,
    pub bridge_correction: bool,
    pub horizon_factor: f64,
    /// Events per networked validation run.
    pub events: u64,
    /// Series truncation tolerance for loss probabilities.
    pub tolerance: f64,
    /// Not part of the digest: where files go does not change what is in them.
    #[serde(skip_serializing)]
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            n_list: vec![2, 3, 6, 12, 72],
            grid: GridSpec::default(),
            replications: 20_000,
            step: 1e-3,
            bridge_correction: true,
            horizon_factor: 50.0,
            events: 10_000,
            tolerance: 1e-12,
            output: OutputPaths::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_list: Option<Vec<u32>>,
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub rho_count: Option<usize>,
    pub replications: Option<u64>,
    pub step: Option<f64>,
    pub events: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Precedence, lowest first: file, `CONSENSIM_SEED`, flags.
    pub fn resolve(
        file: Option<&Path>,
        env_seed: Option<&str>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let mut config = match file {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(raw) = env_seed {
            config.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={raw:?} is not a u64")))?;
        }
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n_list) = &o.n_list {
            self.n_list = n_list.clone();
        }
        if let Some(v) = o.rho_min {
            self.grid.min = v;
        }
        if let Some(v) = o.rho_max {
            self.grid.max = v;
        }
        if let Some(v) = o.rho_count {
            self.grid.count = v;
        }
        if let Some(v) = o.replications {
            self.replications = v;
        }
        if let Some(v) = o.step {
            self.step = v;
        }
        if let Some(v) = o.events {
            self.events = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid.min > 0.0) {
            return Err(CliError::Config(format!(
                "rho grid min {} must be > 0",
                self.grid.min
            )));
        }
        if self.grid.count < 2 {
            return Err(CliError::Config("rho grid needs at least 2 points".into()));
        }
        if self.grid.max < self.grid.min {
            return Err(CliError::Config("rho grid max is below min".into()));
        }
        if self.replications < 100 {
            return Err(CliError::Config(format!(
                "replications = {} is below the minimum of 100",
                self.replications
            )));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(CliError::Config(
                "n list must hold positive agent counts".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(CliError::Config("tolerance must be positive".into()));
        }
        self.path_config(self.seed)
            .validate(1.0)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Agent counts for cost comparisons; these need pairs of agents.
    pub fn comparison_n_list(&self) -> Result<&[u32]> {
        match self.n_list.iter().find(|&&n| n < 2) {
            Some(n) => Err(CliError::Config(format!(
                "n = {n} has no agent pairs; cost comparisons need n >= 2"
            ))),
            None => Ok(&self.n_list),
        }
    }

    pub fn path_config(&self, seed: u64) -> PathConfig {
        PathConfig {
            step: self.step,
            bridge_correction: self.bridge_correction,
            horizon_factor: self.horizon_factor,
            seed,
        }
    }

    /// SHA-256 over the JSON form of every setting except output paths.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses `2,3,6` into agent counts.
pub fn parse_n_list(raw: &str) -> std::result::Result<Vec<u32>, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| format!("invalid agent count {s:?}"))
        })
        .collect()
}

/// Parses `0,0.5,1` into reals.
pub fn parse_real_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid number {s:?}"))
        })
        .collect()
}
