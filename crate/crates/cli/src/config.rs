//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stealthcurve::{FirstOrderPlant, FrequencyGrid, SpectrumSamples, SystemModel, TargetKind, TransferFunction};

use crate::error::CliError;
use crate::output::load_tabulated;

pub const DEFAULT_GRID_N: usize = 1024;
pub const DEFAULT_HORIZON: usize = 1 << 16;
pub const DEFAULT_OUT_DIR: &str = "stealthcurve-out";
pub const GRID_ENV: &str = "STEALTHCURVE_GRID_N";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_spectrum: Option<InputSpectrum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    pub targets: Targets,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma_w2: f64,
    pub sigma_v2: f64,
}

/// `K(z)` coefficients in descending powers of `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

/// Open-loop input spectrum `S_u`. Ignored for closed-loop models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpectrum {
    White { variance: f64 },
    Ar1 { pole: f64, innovation_variance: f64 },
    /// CSV with an `omega` column and a value column sampled on the run grid.
    Tabulated {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Distortion(Vec<f64>),
    StealthBudget(Vec<f64>),
}

impl Targets {
    pub fn kind(&self) -> TargetKind {
        match self {
            Targets::Distortion(_) => TargetKind::Distortion,
            Targets::StealthBudget(_) => TargetKind::StealthBudget,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Targets::Distortion(v) | Targets::StealthBudget(v) => v,
        }
    }

    fn field(&self) -> &'static str {
        match self {
            Targets::Distortion(_) => "targets.distortion",
            Targets::StealthBudget(_) => "targets.stealth_budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub enabled: bool,
    pub horizon: usize,
    pub seed: u64,
    /// Relative tolerance on the empirical distortion.
    pub distortion_tolerance: f64,
    /// Relative tolerance on the Welch-estimated KL rate.
    pub kl_tolerance: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { enabled: false, horizon: DEFAULT_HORIZON, seed: 0, distortion_tolerance: 0.03, kl_tolerance: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub enabled: bool,
    pub horizons: Vec<usize>,
    /// Relative tolerance between the finite-horizon and spectral values.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { enabled: false, horizons: vec![63, 255, 511], tolerance: 0.01 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Command-line and environment values layered over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub env_grid_n: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
        // tabulated paths are relative to the config file
        if let Some(InputSpectrum::Tabulated { path: table, .. }) = &mut config.input_spectrum {
            if table.is_relative() {
                if let Some(dir) = path.parent() {
                    *table = dir.join(&*table);
                }
            }
        }
        Ok(config)
    }

    /// Applies flag > environment > file precedence and fills defaults.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self, CliError> {
        let env_n = match &overrides.env_grid_n {
            Some(raw) => Some(
                raw.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::validation(GRID_ENV, format!("not a positive integer: {raw:?}")))?,
            ),
            None => None,
        };
        self.grid_n = Some(overrides.grid_n.or(env_n).or(self.grid_n).unwrap_or(DEFAULT_GRID_N));
        if let Some(seed) = overrides.seed {
            self.simulation.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.output.dir = Some(out.clone());
        }
        if self.output.dir.is_none() {
            self.output.dir = Some(PathBuf::from(DEFAULT_OUT_DIR));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn grid_len(&self) -> usize {
        self.grid_n.unwrap_or(DEFAULT_GRID_N)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn grid(&self) -> Result<FrequencyGrid, CliError> {
        FrequencyGrid::new(self.grid_len()).map_err(|e| CliError::from_core("grid_n", e))
    }

    fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        let field = self.targets.field();
        let values = self.targets.values();
        if values.is_empty() {
            return Err(CliError::validation(field, "at least one target is required"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(CliError::validation(field, format!("targets must be positive and finite, got {v}")));
        }
        if let Some(w) = values.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(CliError::validation(field, format!("must be strictly increasing, found {} then {}", w[0], w[1])));
        }
        let sim = &self.simulation;
        if sim.horizon == 0 {
            return Err(CliError::validation("simulation.horizon", "must be at least 1"));
        }
        for (name, tol) in [
            ("simulation.distortion_tolerance", sim.distortion_tolerance),
            ("simulation.kl_tolerance", sim.kl_tolerance),
            ("oracle.tolerance", self.oracle.tolerance),
        ] {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(CliError::validation(name, format!("must be nonnegative and finite, got {tol}")));
            }
        }
        if self.oracle.enabled {
            let limit = self.grid_len() / 2 - 1;
            if self.oracle.horizons.is_empty() {
                return Err(CliError::validation("oracle.horizons", "at least one horizon is required"));
            }
            if let Some(k) = self.oracle.horizons.iter().find(|&&k| k > limit) {
                return Err(CliError::validation(
                    "oracle.horizons",
                    format!("horizon {k} needs k + 1 <= grid_n / 2 (largest allowed {limit} for grid_n = {})", self.grid_len()),
                ));
            }
        }
        self.model()?;
        Ok(())
    }

    pub fn model(&self) -> Result<SystemModel, CliError> {
        let p = &self.plant;
        let plant = FirstOrderPlant::new(p.a, p.b, p.c, p.sigma_w2, p.sigma_v2).map_err(|e| CliError::from_core("plant", e))?;
        match &self.controller {
            Some(k) => {
                let tf = TransferFunction::new(k.numerator.clone(), k.denominator.clone())
                    .map_err(|e| CliError::from_core("controller", e))?;
                SystemModel::closed_loop(plant, tf).map_err(|e| CliError::from_core("controller", e))
            }
            None => {
                let input = self.input_spectrum()?;
                SystemModel::open_loop(plant, input).map_err(|e| CliError::from_core("plant.a", e))
            }
        }
    }

    fn input_spectrum(&self) -> Result<SpectrumSamples, CliError> {
        let grid = self.grid()?;
        let field = "input_spectrum";
        match &self.input_spectrum {
            None => Ok(SpectrumSamples::zeros(grid)),
            Some(InputSpectrum::White { variance }) => {
                SpectrumSamples::constant(grid, *variance).map_err(|e| CliError::from_core(field, e))
            }
            Some(InputSpectrum::Ar1 { pole, innovation_variance }) => {
                SpectrumSamples::ar1(grid, *pole, *innovation_variance).map_err(|e| CliError::from_core(field, e))
            }
            Some(InputSpectrum::Tabulated { path, column }) => load_tabulated(path, column.as_deref(), grid),
        }
    }
}
