//! Experiment configuration.
//!
//! A config is a TOML file with these tables (every table except
//! `[potential]` may be omitted and then takes the defaults shown in
//! `configs/default.toml`):
//!
//! * `[potential]`: a potential spec (`kind`, `coefficients`, `exponent`, ...).
//! * `[engine]`: `kind` (`explicit`, `spectral` or `ode`), `half_width`,
//!   `nodes`, `t_min` (spectral), `t0` (ode start time).
//! * `[grid]`: `x_min`, `x_max`, `nx`, `y_min`, `y_max`, `ny`, `t` (list).
//! * `[[envelope]]`: `family` plus any of `c0`..`c3`, `beta`, `kappa`,
//!   `epsilon`, `n`.
//! * `[chain]`: `x`, `y`, `t`, optional `sigma`, on-diagonal `c0`, `c1`,
//!   and the doubling window `window_min`, `window_max`, `depth`.
//! * `[weights]`: `window_min`, `window_max`, `depth`, `rh_q`, `ap_p`.
//! * `[ode]`: `t0`, `t1`, `samples`.
//! * `[tolerances]`: `compare` (engine cross-check in `kernel`), `ode_state`,
//!   `ode_log` (checks in `ode`). `verify` uses its own fixed thresholds.
//! * `seed`: seed for randomized test families.

use std::path::{Path, PathBuf};

use heatkernel::bounds::EnvelopeSpec;
use heatkernel::potentials::{Potential, PotentialSpec};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Explicit,
    Spectral,
    Ode,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Explicit => "explicit",
            EngineKind::Spectral => "spectral",
            EngineKind::Ode => "ode",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSpec {
    pub kind: EngineKind,
    pub half_width: f64,
    pub nodes: usize,
    pub t_min: f64,
    pub t0: f64,
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            kind: EngineKind::Explicit,
            half_width: 8.0,
            nodes: 1599,
            t_min: 0.05,
            t0: 0.01,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    pub t: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_min: -2.0,
            x_max: 2.0,
            nx: 9,
            y_min: -2.0,
            y_max: 2.0,
            ny: 9,
            t: vec![0.05, 0.1, 0.5, 1.0],
        }
    }
}

impl GridSpec {
    pub fn xs(&self) -> Vec<f64> {
        heatkernel::bounds::linspace(self.x_min, self.x_max, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        heatkernel::bounds::linspace(self.y_min, self.y_max, self.ny)
    }

    pub fn sample_grid(&self) -> heatkernel::bounds::SampleGrid {
        heatkernel::bounds::SampleGrid {
            xs: self.xs(),
            ys: self.ys(),
            ts: self.t.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSpec {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub sigma: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub window_min: f64,
    pub window_max: f64,
    pub depth: u32,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            x: 0.0,
            y: 1.0,
            t: 1.0,
            sigma: None,
            c0: 0.5 / (4.0 * std::f64::consts::PI).sqrt(),
            c1: 1.0,
            window_min: -4.0,
            window_max: 4.0,
            depth: 6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSpec {
    pub window_min: f64,
    pub window_max: f64,
    pub depth: u32,
    /// Reverse Hölder exponents; `inf` selects `RH_∞`.
    pub rh_q: Vec<f64>,
    pub ap_p: Vec<f64>,
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec {
            window_min: -1.0,
            window_max: 1.0,
            depth: 12,
            rh_q: vec![1.5, 3.0, f64::INFINITY],
            ap_p: vec![2.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeSpec {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
}

impl Default for OdeSpec {
    fn default() -> Self {
        OdeSpec {
            t0: 0.01,
            t1: 2.0,
            samples: 50,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Slice-relative disagreement allowed between an engine and the
    /// closed form in `kernel`.
    pub compare: f64,
    /// Largest ODE coefficient error against the closed form in `ode`.
    pub ode_state: f64,
    /// Largest log-kernel error of the assembled ODE kernel in `ode`.
    pub ode_log: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            compare: 5e-3,
            ode_state: 1e-6,
            ode_log: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, rename = "envelope")]
    pub envelopes: Vec<EnvelopeSpec>,
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default)]
    pub ode: OdeSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    7
}

/// A parsed config with its source text hash and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub potential: Potential,
    /// First 16 hex digits of the SHA-256 of the config text.
    pub hash: String,
    pub base: PathBuf,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base).map_err(|e| match e {
            CliError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn default_config() -> Result<Self, CliError> {
        Self::from_text(DEFAULT_CONFIG, Path::new("."))
    }

    pub fn from_text(text: &str, base: &Path) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let potential = config
            .potential
            .build(base)
            .map_err(|e| config_err(format!("[potential]: {e}")))?;
        let digest = Sha256::digest(text.as_bytes());
        let loaded = LoadedConfig {
            config,
            potential,
            hash: hex::encode(digest)[..16].to_string(),
            base: base.to_path_buf(),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        let g = &c.grid;
        if !(g.x_min <= g.x_max && g.y_min <= g.y_max) {
            return Err(config_err("[grid]: ranges must satisfy min ≤ max"));
        }
        if g.t.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(config_err("[grid]: times must be positive and finite"));
        }
        let tol = &c.tolerances;
        if !(tol.compare > 0.0 && tol.ode_state > 0.0 && tol.ode_log > 0.0) {
            return Err(config_err("[tolerances]: every tolerance must be positive"));
        }
        let e = &c.engine;
        match e.kind {
            EngineKind::Explicit | EngineKind::Ode => {
                if self.potential.dimension() != 1 || self.quadratic().is_none() {
                    return Err(config_err(format!(
                        "[engine]: the {} engine needs a quadratic potential a0 + a1 x + a2 x² with a2 > 0 \
                         (or a constant)",
                        e.kind.name()
                    )));
                }
            }
            EngineKind::Spectral => {
                if !(e.half_width > 0.0) || e.nodes < 2 || !(e.t_min > 0.0) {
                    return Err(config_err("[engine]: spectral needs half_width > 0, nodes ≥ 2, t_min > 0"));
                }
                if self.potential.dimension() != 1 {
                    return Err(config_err("[engine]: the spectral engine is one-dimensional"));
                }
            }
        }
        if e.kind == EngineKind::Ode && self.quadratic().is_some_and(|q| q.2 == 0.0) {
            return Err(config_err("[engine]: the ode engine needs a2 > 0"));
        }
        if e.kind != EngineKind::Spectral && self.quadratic().is_some_and(|q| q.0 < 0.0 && q.2 == 0.0) {
            return Err(config_err("[potential]: constant potentials must be nonnegative"));
        }
        for (i, env) in c.envelopes.iter().enumerate() {
            env.build().map_err(|err| config_err(format!("[[envelope]] #{}: {err}", i + 1)))?;
        }
        if c.ode.samples == 0 || !(c.ode.t1 > c.ode.t0 && c.ode.t0 > 0.0) {
            return Err(config_err("[ode]: need 0 < t0 < t1 and samples ≥ 1"));
        }
        if !(c.weights.window_min < c.weights.window_max) {
            return Err(config_err("[weights]: window_min must be below window_max"));
        }
        if !(c.chain.window_min < c.chain.window_max) {
            return Err(config_err("[chain]: window_min must be below window_max"));
        }
        Ok(())
    }

    /// `(a0, a1, a2)` when the potential is a quadratic with `a2 > 0` or a
    /// constant.
    pub fn quadratic(&self) -> Option<(f64, f64, f64)> {
        if let Some(q) = self.potential.as_quadratic() {
            return Some(q);
        }
        match &self.potential {
            Potential::Polynomial { factors } if factors.len() == 1 => {
                let c = &factors[0];
                c.iter().skip(1).all(|a| *a == 0.0).then(|| (c.first().copied().unwrap_or(0.0), 0.0, 0.0))
            }
            _ => None,
        }
    }
}
