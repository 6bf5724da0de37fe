//! Experiment configuration: a single JSON file with every physical
//! parameter stated explicitly.

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

pub type Mat3 = Matrix3<f64>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Maximum representation degree; the basis holds `2N` real functions
    /// with `N = sum_{l<=l_max} (2l+1)^2`.
    pub l_max: u32,
    /// Noise intensities; each run uses `sigma = gamma I`.
    pub gammas: Vec<f64>,
    /// Control weight, row-major.
    pub w: [[f64; 3]; 3],
    /// Running-cost selector.
    pub cost: CostKind,
    /// Diagonal regularization added to the diffusion matrix.
    pub epsilon: f64,
    pub solver: SolverSection,
    pub sim: SimSection,
    /// Initial attitude as ZYZ angles (radians).
    pub r0_zyz: [f64; 3],
    /// Basis-truncation sweep parameters (only needed by `sweep`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    /// Output directory; `--out` overrides.
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `l(R) = 3 - tr(R)`.
    TraceGap,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in `(0, 1]`; `1` is the plain iteration.
    pub damping: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t0: f64,
    pub dt: f64,
    pub n_runs: usize,
    pub seed: u64,
    /// Also write one trajectory CSV per run.
    pub export_trajectories: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Noise intensity the sweep solves at.
    pub gamma: f64,
    /// Explicit truncation sizes `N`; `null` sweeps `1..=N_max`.
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.l_max > 4 {
            return Err(ConfigError(format!(
                "l_max = {} stores {} coupling matrices; limit is 4",
                self.l_max,
                2 * basis_pairs(self.l_max)
            )));
        }
        if self.gammas.is_empty() {
            return Err(ConfigError("gammas must not be empty".into()));
        }
        if self.gammas.iter().any(|g| !(*g > 0.0)) {
            return Err(ConfigError("every gamma must be positive".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(ConfigError("epsilon must be nonnegative".into()));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(ConfigError("solver.tol must be positive and max_iter at least 1".into()));
        }
        if !(self.solver.damping > 0.0 && self.solver.damping <= 1.0) {
            return Err(ConfigError("solver.damping must lie in (0, 1]".into()));
        }
        if !(self.sim.dt > 0.0) || self.sim.t0 < self.sim.dt || self.sim.n_runs == 0 {
            return Err(ConfigError("sim requires dt > 0, t0 >= dt and n_runs >= 1".into()));
        }
        if let Some(sweep) = &self.sweep {
            if !(sweep.gamma > 0.0) {
                return Err(ConfigError("sweep.gamma must be positive".into()));
            }
            if let Some(sizes) = &sweep.sizes {
                let n_max = basis_pairs(self.l_max);
                if sizes.iter().any(|n| *n == 0 || *n > n_max) {
                    return Err(ConfigError(format!("sweep sizes must lie in 1..={n_max}")));
                }
            }
        }
        Ok(())
    }

    pub fn w_matrix(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.w[i][j])
    }

    /// Canonical serialized form: pretty JSON with the struct's field order.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialize config");
        s.push('\n');
        s
    }
}

pub fn basis_pairs(l_max: u32) -> usize {
    (0..=l_max).map(|l| (2 * l as usize + 1) * (2 * l as usize + 1)).sum()
}
