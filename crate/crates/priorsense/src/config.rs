//! Experiment configuration, read from and written to JSON.

use std::path::{Path, PathBuf};

use priorsense_core::design::{DesignProblem, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// One full sweep over sensing sizes and energy budgets.
///
/// `lambda_grid` holds multipliers of a per-point `λ_max` estimate, not
/// absolute penalties. `ridge` is relative to the mean eigenvalue of the
/// matrix being whitened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m_x: usize,
    pub m_c: usize,
    pub rank: usize,
    pub m_list: Vec<usize>,
    pub alpha_sq_grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    #[serde(default)]
    pub common_noise: bool,
    #[serde(default = "default_solver_max_iter")]
    pub solver_max_iter: usize,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
}

fn default_iterations() -> usize {
    DesignProblem::DEFAULT_ITERATIONS
}

fn default_lambda_grid() -> Vec<f64> {
    priorsense_core::recovery::log_grid(1.0, 1e-3, 1e1, 6)
}

fn default_ridge() -> f64 {
    1e-10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_calibration_trials() -> usize {
    20
}

fn default_solver_max_iter() -> usize {
    20_000
}

fn default_solver_tol() -> f64 {
    1e-6
}

fn default_strategies() -> Vec<String> {
    Strategy::ALL.iter().map(|s| s.label().to_string()).collect()
}

impl ExperimentConfig {
    /// n = 40, six rank-4 models per class, 200 trials.
    pub fn desk() -> Self {
        serde_json::from_str(include_str!("../configs/desk.json")).expect("shipped config parses")
    }

    /// n = 100, ten rank-6 models per class, 1000 trials.
    pub fn paper() -> Self {
        serde_json::from_str(include_str!("../configs/paper.json")).expect("shipped config parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| config_err!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        parse_strategies(&self.strategies)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("m_x", self.m_x),
            ("m_c", self.m_c),
            ("rank", self.rank),
            ("trials", self.trials),
            ("iterations", self.iterations),
            ("calibration_trials", self.calibration_trials),
            ("solver_max_iter", self.solver_max_iter),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(config_err!("{name} must be positive"));
            }
        }
        if self.rank > self.n {
            return Err(config_err!("rank {} exceeds n = {}", self.rank, self.n));
        }
        if self.m_list.is_empty() {
            return Err(config_err!("m_list is empty"));
        }
        if let Some(m) = self.m_list.iter().find(|&&m| m == 0 || m > self.n) {
            return Err(config_err!("m = {m} outside 1..={}", self.n));
        }
        if self.alpha_sq_grid.is_empty() {
            return Err(config_err!("alpha_sq_grid is empty"));
        }
        if self.alpha_sq_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(config_err!("alpha_sq_grid values must be finite and positive"));
        }
        if self.alpha_sq_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err!("alpha_sq_grid must be strictly increasing"));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(config_err!("lambda_grid must be non-empty with finite nonnegative entries"));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(config_err!("ridge must be finite and nonnegative"));
        }
        if !(self.solver_tol.is_finite() && self.solver_tol > 0.0) {
            return Err(config_err!("solver_tol must be finite and positive"));
        }
        self.strategies()?;
        Ok(())
    }
}

/// Parses strategy labels; duplicates are dropped and the canonical order
/// is kept.
pub fn parse_strategies<S: AsRef<str>>(labels: &[S]) -> Result<Vec<Strategy>> {
    let mut picked = Vec::new();
    for l in labels {
        let l = l.as_ref().trim();
        let s = Strategy::from_label(l).ok_or_else(|| {
            let known: Vec<_> = Strategy::ALL.iter().map(|s| s.label()).collect();
            config_err!("unknown strategy {l:?}; expected one of {}", known.join(", "))
        })?;
        picked.push(s);
    }
    if picked.is_empty() {
        return Err(config_err!("strategy list is empty"));
    }
    Ok(Strategy::ALL.iter().copied().filter(|s| picked.contains(s)).collect())
}
