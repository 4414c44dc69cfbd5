//! Experiment configuration (TOML).
//!
//! ```toml
//! [run]
//! kappa = 5.0
//! episodes = 10000
//! trap_seeds = [0, 1, 2, 3, 4]
//!
//! [[domain]]
//! kind = "gridworld"
//! sizes = [4, 6]
//! traps = 2
//! ```
//!
//! Unknown keys are rejected. Every `[run]` key has a default; every
//! `[[domain]]` entry needs `kind` plus `sizes` (or `deltas` for puddle).

use std::path::Path;

use entrap_core::domains::DomainKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Desk-scale sweep shipped with the binary.
pub const DESK_SCALE: &str = include_str!("../configs/desk-scale.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kappa: f64,
    pub slip: f64,
    pub gamma: f64,
    pub budget_cap: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub episodes: usize,
    /// Episode truncation; derived from `gamma` when absent.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub trap_seeds: Vec<u64>,
    pub timeout_secs: u64,
    /// Concurrent instances; 0 means one per core.
    pub parallelism: usize,
    /// Construction and planning are repeated this often and the fastest
    /// run is reported.
    pub timing_repeats: usize,
    /// Largest compiled defender model.
    pub state_limit: usize,
    /// Write one JSON-lines trace per instance.
    pub traces: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kappa: entrap_core::attacker::DEFAULT_KAPPA,
            slip: 0.5,
            gamma: entrap_core::domains::DEFAULT_GAMMA,
            budget_cap: entrap_core::budget::DEFAULT_BUDGET_CAP,
            tolerance: 1e-6,
            max_iterations: 100_000,
            episodes: 10_000,
            horizon: None,
            seed: 42,
            trap_seeds: vec![0, 1, 2, 3, 4],
            timeout_secs: 1800,
            parallelism: 0,
            timing_repeats: 1,
            state_limit: 5_000_000,
            traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: String,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    pub traps: usize,
    /// Layout seed (walls, doors, rocks).
    #[serde(default)]
    pub seed: u64,
    /// Overrides `run.kappa` for this family.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Overrides `run.slip` for this family.
    #[serde(default)]
    pub slip: Option<f64>,
    #[serde(default)]
    pub rocks: Option<usize>,
    /// Rock value or puddle step reward, depending on `kind`.
    #[serde(default)]
    pub reward: Option<f64>,
}

impl DomainConfig {
    pub fn domain_kind(&self) -> Option<DomainKind> {
        DomainKind::from_name(&self.kind).filter(|k| {
            matches!(
                k,
                DomainKind::Gridworld | DomainKind::FourRooms | DomainKind::RockSampling | DomainKind::Puddle
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, rename = "domain")]
    pub domains: Vec<DomainConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn desk_scale() -> Self {
        Self::parse(DESK_SCALE).expect("embedded config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        check_kappa(r.kappa)?;
        check_slip(r.slip)?;
        if !(r.gamma > 0.0 && r.gamma < 1.0) {
            return Err(invalid("run.gamma must lie in (0, 1)"));
        }
        if r.budget_cap == 0 {
            return Err(invalid("run.budget_cap must be at least 1"));
        }
        if !(r.tolerance > 0.0 && r.tolerance.is_finite()) {
            return Err(invalid("run.tolerance must be positive"));
        }
        if r.max_iterations == 0 {
            return Err(invalid("run.max_iterations must be at least 1"));
        }
        if r.episodes == 0 {
            return Err(invalid("run.episodes must be at least 1"));
        }
        if r.horizon == Some(0) {
            return Err(invalid("run.horizon must be at least 1"));
        }
        if r.trap_seeds.is_empty() {
            return Err(invalid("run.trap_seeds must not be empty"));
        }
        if r.timeout_secs == 0 {
            return Err(invalid("run.timeout_secs must be at least 1"));
        }
        if r.timing_repeats == 0 {
            return Err(invalid("run.timing_repeats must be at least 1"));
        }
        if self.domains.is_empty() {
            return Err(invalid("no [[domain]] entries"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            let kind = d
                .domain_kind()
                .ok_or_else(|| invalid(format!("domain[{i}].kind `{}` is not a benchmark domain", d.kind)))?;
            if kind == DomainKind::Puddle {
                if d.deltas.is_empty() || !d.sizes.is_empty() {
                    return Err(invalid(format!("domain[{i}]: puddle takes `deltas`, not `sizes`")));
                }
            } else if d.sizes.is_empty() || !d.deltas.is_empty() {
                return Err(invalid(format!("domain[{i}]: {} takes `sizes`, not `deltas`", d.kind)));
            }
            if d.traps == 0 {
                return Err(invalid(format!("domain[{i}].traps must be at least 1")));
            }
            if let Some(k) = d.kappa {
                check_kappa(k)?;
            }
            if let Some(s) = d.slip {
                check_slip(s)?;
            }
            if d.rocks.is_some() && kind != DomainKind::RockSampling {
                return Err(invalid(format!("domain[{i}].rocks only applies to rock-sampling")));
            }
            if d.reward.is_some() && !matches!(kind, DomainKind::RockSampling | DomainKind::Puddle) {
                return Err(invalid(format!("domain[{i}].reward only applies to rock-sampling and puddle")));
            }
        }
        Ok(())
    }
}

fn check_kappa(k: f64) -> Result<(), ConfigError> {
    if k.is_nan() || k < 0.0 {
        return Err(invalid("kappa must be non-negative"));
    }
    Ok(())
}

fn check_slip(s: f64) -> Result<(), ConfigError> {
    if !(0.0..1.0).contains(&s) {
        return Err(invalid("slip must lie in [0, 1)"));
    }
    Ok(())
}
