//! Run configuration: a single JSON document plus command-line overrides.
//!
//! Every subcommand reads the same schema; fields irrelevant to a
//! subcommand are simply ignored by it. Unknown keys are rejected so that
//! typos surface as configuration errors instead of silently falling back
//! to defaults.

use std::path::{Path, PathBuf};

use reachcert::scenario::ScenarioParams;
use reachcert::tol;
use serde::Deserialize;

/// Pass/fail thresholds that a config file may override. Everything not
/// listed here is either derived from the run itself (first-order step
/// tolerances, calibrated value-function tolerances) or fixed by the
/// library.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Hamilton-Jacobi residual threshold for asserted certificates.
    pub hji: f64,
    /// Velocity-membership residual threshold for simulated trajectories.
    pub admissibility: f64,
    /// Relative band around the closed-form mean-norm decay curve.
    pub mean_decay_rel: f64,
    /// Relative band for conservation of centered particle norms.
    pub norm_conservation_rel: f64,
    /// Norm threshold for the mean of the Gaussian quantization grid.
    pub quantization_mean: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hji: tol::HJI_TOL,
            admissibility: tol::ADMISSIBILITY_TOL,
            mean_decay_rel: tol::MEAN_DECAY_REL,
            norm_conservation_rel: tol::NORM_CONSERVATION_REL,
            quantization_mean: tol::QUANTIZATION_MEAN_TOL,
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_total() -> f64 {
    5.0
}

fn default_budget() -> usize {
    200
}

fn default_control_grid() -> usize {
    4
}

fn default_subdivisions() -> usize {
    4
}

fn default_samples() -> usize {
    100
}

/// The on-disk configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario name: `example1` (radial ball field) or `example2`
    /// (rotation with damping against a Gaussian quantization).
    pub scenario: String,
    /// Scenario parameters (rates, quantization size, optional random
    /// initial cloud).
    #[serde(default)]
    pub params: ScenarioParams,
    /// Euler step size.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Horizon length; `T` is accepted as an alias.
    #[serde(default = "default_t_total", alias = "T")]
    pub t_total: f64,
    /// Seed for every randomized component of the run.
    #[serde(default)]
    pub seed: u64,
    /// Random-shooting budget of the terminal-cost optimizer.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Piecewise-constant control intervals per particle.
    #[serde(default = "default_control_grid")]
    pub control_grid: usize,
    /// Number of equal pieces for the piecewise (viability) certificate.
    #[serde(default = "default_subdivisions")]
    pub subdivisions: usize,
    /// Number of random clouds sampled by the residual sweep.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory; overridden by `--out`, defaults to `out`.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_total: Option<f64>,
    pub budget: Option<usize>,
}

/// A fully resolved run: file values with overrides applied and basic
/// shape validation done. Library-level validation (positivity of rates,
/// perfect-square grids, divisibility of the step grid) happens when the
/// run is built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

/// A configuration or usage problem; the caller maps this to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("malformed config {}: {e}", path.display())))?;

    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(dt) = overrides.dt {
        config.dt = dt;
    }
    if let Some(t) = overrides.t_total {
        config.t_total = t;
    }
    if let Some(budget) = overrides.budget {
        config.budget = budget;
    }
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    validate(&config)?;
    Ok(Resolved { config, out_dir })
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    if config.scenario.is_empty() {
        return Err(ConfigError("config field `scenario` must be a non-empty name".to_string()));
    }
    if !(config.dt > 0.0) || !config.dt.is_finite() {
        return Err(ConfigError(format!("config field `dt` must be positive and finite, got {}", config.dt)));
    }
    if !(config.t_total > 0.0) || !config.t_total.is_finite() {
        return Err(ConfigError(format!(
            "config field `t_total` must be positive and finite, got {}",
            config.t_total
        )));
    }
    if config.budget == 0 {
        return Err(ConfigError("config field `budget` must be at least 1".to_string()));
    }
    if config.control_grid == 0 {
        return Err(ConfigError("config field `control_grid` must be at least 1".to_string()));
    }
    if config.subdivisions == 0 {
        return Err(ConfigError("config field `subdivisions` must be at least 1".to_string()));
    }
    if config.samples == 0 {
        return Err(ConfigError("config field `samples` must be at least 1".to_string()));
    }
    let t = &config.tolerances;
    for (name, value) in [
        ("tolerances.hji", t.hji),
        ("tolerances.admissibility", t.admissibility),
        ("tolerances.mean_decay_rel", t.mean_decay_rel),
        ("tolerances.norm_conservation_rel", t.norm_conservation_rel),
        ("tolerances.quantization_mean", t.quantization_mean),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ConfigError(format!("config field `{name}` must be positive and finite, got {value}")));
        }
    }
    Ok(())
}
