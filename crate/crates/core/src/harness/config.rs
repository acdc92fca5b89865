//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::presets::Preset;
use crate::error::config;
use crate::fracsim::ModelSpec;
use crate::spectral::KernelSpec;
use crate::theory::{delta_rate, truncation_m};
use crate::{Error, Result};

/// Either a named preset (rebuilt for every `n`) or an explicit model,
/// truncated to the first `n` rows of each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Preset(Preset),
    Spec(ModelSpec),
}

impl ModelSource {
    pub fn spec(&self, n: usize) -> Result<ModelSpec> {
        match self {
            ModelSource::Preset(p) => p.spec(n),
            ModelSource::Spec(s) => {
                if n > s.n() {
                    return Err(config(format!("model has {} rows, cell asks for n = {n}", s.n())));
                }
                s.truncated(n)
            }
        }
    }

    pub fn q(&self) -> usize {
        match self {
            ModelSource::Preset(p) => p.q(),
            ModelSource::Spec(s) => s.q(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dynamic,
    Static,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dynamic => "dynamic",
            Method::Static => "static",
            Method::Oracle => "oracle",
        }
    }
}

/// Truncation lag `M(T)` of the two-sided filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Fixed(usize),
    /// `M = floor(T^m)`.
    Power { m: f64 },
    /// `M = floor((C_M / (delta sqrt(n)))^beta)`.
    Rule { beta: f64, c_m: f64 },
}

impl Truncation {
    pub fn resolve(&self, n: usize, t_len: usize, bandwidth: f64, spread: f64) -> Result<usize> {
        let m = match *self {
            Truncation::Fixed(m) => m,
            Truncation::Power { m } => {
                if !(m > 0.0 && m < 1.0) {
                    return Err(config(format!("truncation exponent {m} outside (0, 1)")));
                }
                (((t_len as f64).powf(m) + 1e-12).floor() as usize).max(1)
            }
            Truncation::Rule { beta, c_m } => truncation_m(delta_rate(t_len, bandwidth, spread)?, n, beta, c_m)?,
        };
        if m == 0 {
            return Err(config("truncation lag must be positive"));
        }
        Ok(m)
    }
}

/// Time points entering the R criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TRule {
    /// `ceil(0.2 T)..=floor(0.8 T)`.
    #[default]
    Center,
    Full,
}

impl TRule {
    /// 1-based inclusive window.
    pub fn window(self, t_len: usize) -> (usize, usize) {
        match self {
            TRule::Center => ((t_len * 2).div_ceil(10).max(1), (t_len * 8) / 10),
            TRule::Full => (1, t_len),
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Dynamic, Method::Static]
}

fn default_b() -> f64 {
    0.5
}

/// The truncation-lag rule with `beta = 0.6`, `C_M = 50`.
pub const DEFAULT_TRUNCATION: Truncation = Truncation::Rule { beta: 0.6, c_m: 50.0 };

fn default_truncation() -> Truncation {
    DEFAULT_TRUNCATION
}

fn default_reps() -> usize {
    50
}

fn default_seed() -> u64 {
    20240601
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// `(n, T)` cells.
    pub grid: Vec<(usize, usize)>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// `B_T = T^-b`.
    #[serde(default = "default_b")]
    pub bandwidth_exponent: f64,
    #[serde(default = "default_truncation")]
    pub truncation: Truncation,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Estimation grid size; `2^ceil(log2 8T)` when absent.
    #[serde(default)]
    pub grid_size: Option<usize>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub t_rule: TRule,
    /// Static factors; the dynamic `q` when absent.
    #[serde(default)]
    pub q_static: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for `preset` on a single cell.
    pub fn preset(preset: Preset, n: usize, t_len: usize) -> Self {
        Self {
            model: ModelSource::Preset(preset),
            grid: vec![(n, t_len)],
            methods: default_methods(),
            bandwidth_exponent: default_b(),
            truncation: default_truncation(),
            kernel: KernelSpec::default(),
            grid_size: None,
            replications: default_reps(),
            seed: default_seed(),
            t_rule: TRule::Center,
            q_static: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn q(&self) -> usize {
        self.model.q()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(config("empty (n, T) grid"));
        }
        for &(n, t) in &self.grid {
            if n < self.q() + 1 {
                return Err(config(format!("cell (n = {n}, T = {t}) needs n >= q + 1 = {}", self.q() + 1)));
            }
            if t < 16 {
                return Err(config(format!("cell (n = {n}, T = {t}) needs T >= 16")));
            }
        }
        if self.replications == 0 {
            return Err(config("replications must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config("no estimation method selected"));
        }
        if !(self.bandwidth_exponent > 0.0 && self.bandwidth_exponent < 1.0) {
            return Err(config(format!("bandwidth exponent {} outside (0, 1)", self.bandwidth_exponent)));
        }
        if let Some(qs) = self.q_static {
            if qs == 0 {
                return Err(config("q_static must be positive"));
            }
        }
        if let Truncation::Fixed(0) = self.truncation {
            return Err(config("truncation lag must be positive"));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}
