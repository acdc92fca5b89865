//! Named model families used by the experiments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::config;
use crate::fracsim::{Entry, Idiosyncratic, ModelSpec};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// One factor, `(1-L)^{-0.4} / (1 - alpha_i L)`, unit white noise.
    Table12,
    /// Two factors with memories `(0.35, 0.10)`.
    Rank2Factor,
    /// Three factors with memories `(0.45, 0.25, 0.20)`.
    Rank3Factor,
    /// One factor, `d_i = 0.35` except one row at `0.25`.
    Rank1Rowpert,
    /// Two factors, `d_il = 0.35` except one entry at `0.25`.
    Rank2Entrypert,
    /// Two factors, memories equally spaced over rows.
    Rank2Equalpert,
    /// Two factors with memories `(0.40, 0.25)` and dense AR(1) noise.
    CompanionRank2,
}

pub const ALL_PRESETS: [Preset; 7] = [
    Preset::Table12,
    Preset::Rank2Factor,
    Preset::Rank3Factor,
    Preset::Rank1Rowpert,
    Preset::Rank2Entrypert,
    Preset::Rank2Equalpert,
    Preset::CompanionRank2,
];

/// Row whose perturbation distinguishes the perturbed presets.
pub const PERTURBED_ROW: usize = 9;

/// `count` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

fn dense_ar() -> Idiosyncratic {
    Idiosyncratic::DenseAr1 {
        sigma: 1.0,
        phi: 0.4,
        r_cs: 0.6,
    }
}

fn diagonal_ar() -> Idiosyncratic {
    Idiosyncratic::DenseAr1 {
        sigma: 1.0,
        phi: 0.4,
        r_cs: 0.0,
    }
}

fn white() -> Idiosyncratic {
    Idiosyncratic::WhiteNoise { sigma: 1.0 }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Table12 => "table12",
            Preset::Rank2Factor => "rank2-factor",
            Preset::Rank3Factor => "rank3-factor",
            Preset::Rank1Rowpert => "rank1-rowpert",
            Preset::Rank2Entrypert => "rank2-entrypert",
            Preset::Rank2Equalpert => "rank2-equalpert",
            Preset::CompanionRank2 => "companion-rank2",
        }
    }

    pub fn q(self) -> usize {
        match self {
            Preset::Table12 | Preset::Rank1Rowpert => 1,
            Preset::Rank3Factor => 3,
            _ => 2,
        }
    }

    /// Cross-section used when none is requested.
    pub fn default_n(self) -> usize {
        match self {
            Preset::Table12 => 50,
            _ => 80,
        }
    }

    /// Row whose filter-coefficient decay is reported.
    pub fn target_row(self) -> usize {
        match self {
            Preset::Rank1Rowpert | Preset::Rank2Equalpert => PERTURBED_ROW,
            _ => 0,
        }
    }

    /// Model with `n` rows; loadings interpolate over the rows.
    pub fn spec(self, n: usize) -> Result<ModelSpec> {
        let min_n = match self {
            Preset::Rank1Rowpert | Preset::Rank2Entrypert => PERTURBED_ROW + 2,
            p => p.q() + 1,
        };
        if n < min_n {
            return Err(config(format!("preset {self} needs n >= {min_n}, got {n}")));
        }
        let row = PERTURBED_ROW;
        match self {
            Preset::Table12 => {
                let a = linspace(0.2, 0.8, n);
                ModelSpec::from_fn(n, 1, white(), |i, _| Entry::one_pole(0.4, 1.0, a[i]))
            }
            Preset::Rank1Rowpert => {
                let a = linspace(0.2, 0.8, n);
                ModelSpec::from_fn(n, 1, white(), |i, _| {
                    Entry::one_pole(if i == row { 0.25 } else { 0.35 }, 1.0, a[i])
                })
            }
            Preset::Rank2Entrypert => {
                let a = [linspace(0.2, 0.7, n), linspace(0.5, 0.9, n)];
                ModelSpec::from_fn(n, 2, white(), |i, l| {
                    Entry::one_pole(if (i, l) == (row, 0) { 0.25 } else { 0.35 }, 1.0, a[l][i])
                })
            }
            Preset::Rank2Equalpert => {
                let d = [linspace(0.1, 0.3, n), linspace(0.15, 0.35, n)];
                let a = [linspace(0.2, 0.7, n), linspace(0.5, 0.9, n)];
                ModelSpec::from_fn(n, 2, diagonal_ar(), |i, l| Entry::one_pole(d[l][i], 1.0, a[l][i]))
            }
            Preset::CompanionRank2 | Preset::Rank2Factor => {
                let d = if self == Preset::CompanionRank2 { [0.40, 0.25] } else { [0.35, 0.10] };
                let a = [linspace(0.2, 0.8, n), linspace(-0.5, 0.5, n)];
                ModelSpec::from_fn(n, 2, dense_ar(), |i, l| Entry::one_pole(d[l], 1.0, a[l][i]))
            }
            Preset::Rank3Factor => {
                let d = [0.45, 0.25, 0.20];
                let a = [linspace(0.2, 0.8, n), linspace(-0.5, 0.5, n), linspace(-0.8, -0.2, n)];
                ModelSpec::from_fn(n, 3, dense_ar(), |i, l| Entry::one_pole(d[l], 1.0, a[l][i]))
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_PRESETS
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ALL_PRESETS.iter().map(|p| p.name()).collect();
                config(format!("unknown preset {s:?}; expected one of {}", names.join(", ")))
            })
    }
}
