//! Plot-ready datasets for the eigengap, coefficient-decay, L1-error and
//! main-term experiments.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::montecarlo::thread_pool;
use super::presets::Preset;
use crate::diagnostics::{
    decay_slope, default_gap_thetas, eigengap_curve, l1_spectral_error, loglog_fit, main_term_moment, write_xy_csv,
    MainTermConfig, SlopeFit,
};
use crate::error::config;
use crate::filterbank::{coefficient_norms, oracle_bank};
use crate::fracsim::{analytic_spectrum, derive_seed, simulate_panel, SimOptions};
use crate::spectral::{smoothed_spectrum, FrequencyGrid, KernelSpec, SpectralField};
use crate::theory::delta_rate;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureKind {
    Eigengap,
    Decay,
    L1,
    Mainterm,
}

impl FigureKind {
    pub fn name(self) -> &'static str {
        match self {
            FigureKind::Eigengap => "eigengap",
            FigureKind::Decay => "decay",
            FigureKind::L1 => "l1",
            FigureKind::Mainterm => "mainterm",
        }
    }
}

impl FromStr for FigureKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigengap" => Ok(FigureKind::Eigengap),
            "decay" => Ok(FigureKind::Decay),
            "l1" => Ok(FigureKind::L1),
            "mainterm" => Ok(FigureKind::Mainterm),
            other => Err(config(format!(
                "unknown figure {other:?}; expected eigengap, decay, l1 or mainterm"
            ))),
        }
    }
}

/// Optional replacements for a figure's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureOverrides {
    pub preset: Option<Preset>,
    pub n: Option<usize>,
    pub ts: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub max_lag: Option<usize>,
    pub grid_size: Option<usize>,
    pub h_min: Option<usize>,
    /// 0-based target row for the decay figure.
    pub row: Option<usize>,
    /// Fit these `(h, norm)` pairs instead of computing a filter bank.
    pub norms: Option<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureOutput {
    pub kind: FigureKind,
    pub csv: String,
    pub fit: Option<SlopeFit>,
    pub summary: serde_json::Value,
}

pub const DECAY_MAX_LAG: usize = 1024;
pub const DECAY_GRID: usize = 1 << 14;
pub const DECAY_H_MIN: usize = 80;
pub const L1_TS: [usize; 3] = [128, 256, 512];
pub const L1_GRID: usize = 512;
pub const MAINTERM_TS: [usize; 7] = [160, 192, 256, 384, 512, 768, 1024];
pub const DEFAULT_FIGURE_SEED: u64 = 7;

pub fn run_figure(kind: FigureKind, ov: &FigureOverrides, threads: Option<usize>) -> Result<FigureOutput> {
    let pool = thread_pool(threads)?;
    pool.install(|| match kind {
        FigureKind::Eigengap => eigengap_figure(ov),
        FigureKind::Decay => decay_figure(ov),
        FigureKind::L1 => l1_figure(ov),
        FigureKind::Mainterm => mainterm_figure(ov),
    })
}

fn eigengap_figure(ov: &FigureOverrides) -> Result<FigureOutput> {
    let preset = ov.preset.unwrap_or(Preset::CompanionRank2);
    let n = ov.n.unwrap_or(preset.default_n());
    let spec = preset.spec(n)?;
    let curve = eigengap_curve(&spec, spec.q(), &default_gap_thetas())?;
    let fit = loglog_fit(&curve)?;
    let at = [0.01];
    let g1 = eigengap_curve(&spec, spec.q(), &at)?[0].1;
    let g2 = eigengap_curve(&preset.spec(2 * n)?, spec.q(), &at)?[0].1;
    let mut buf = Vec::new();
    write_xy_csv(&curve, Some(&fit), &mut buf)?;
    Ok(FigureOutput {
        kind: FigureKind::Eigengap,
        csv: String::from_utf8(buf).expect("ascii csv"),
        fit: Some(fit),
        summary: json!({
            "preset": preset.name(), "n": n, "slope": fit.slope, "r2": fit.r2,
            "gap_ratio_2n_over_n_at_0.01": g2 / g1,
        }),
    })
}

fn decay_figure(ov: &FigureOverrides) -> Result<FigureOutput> {
    let h_min = ov.h_min.unwrap_or(DECAY_H_MIN);
    let (norms, label) = match &ov.norms {
        Some(norms) => (norms.clone(), json!("supplied")),
        None => {
            let preset = ov.preset.unwrap_or(Preset::Rank1Rowpert);
            let n = ov.n.unwrap_or(preset.default_n());
            let row = ov.row.unwrap_or(preset.target_row());
            let spec = preset.spec(n)?;
            let m = ov.max_lag.unwrap_or(DECAY_MAX_LAG);
            let bank = oracle_bank(&spec, m, ov.grid_size.unwrap_or(DECAY_GRID), Some(&[row]))?;
            (coefficient_norms(&bank, Some(row))?, json!({"preset": preset.name(), "n": n, "row": row, "max_lag": m}))
        }
    };
    let fit = decay_slope(&norms, h_min)?;
    let pts: Vec<(f64, f64)> = norms.iter().map(|&(h, v)| (h as f64, v)).collect();
    let mut buf = Vec::new();
    write_xy_csv(&pts, Some(&fit), &mut buf)?;
    Ok(FigureOutput {
        kind: FigureKind::Decay,
        csv: String::from_utf8(buf).expect("ascii csv"),
        fit: Some(fit),
        summary: json!({"source": label, "h_min": h_min, "slope": fit.slope, "r2": fit.r2}),
    })
}

/// Mean weighted-L1 error of the smoothed periodogram per `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Point {
    pub t_len: usize,
    pub mean: f64,
    pub std: f64,
    pub delta: f64,
    pub failures: usize,
}

pub fn l1_curve(
    preset: Preset,
    n: usize,
    ts: &[usize],
    reps: usize,
    grid_size: usize,
    seed: u64,
) -> Result<Vec<L1Point>> {
    let spec = preset.spec(n)?;
    let grid = FrequencyGrid::midpoint(grid_size)?;
    let truth = SpectralField::from_fn(grid.clone(), |theta| analytic_spectrum(&spec, theta))?;
    let d_tilde = spec.min_memory();
    let spread = spec.max_memory() - d_tilde;
    ts.iter()
        .map(|&t_len| {
            let bandwidth = (t_len as f64).powf(-0.5);
            let errs: Vec<Option<f64>> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let s = derive_seed(&[seed, n as u64, t_len as u64, r as u64]);
                    let panel = simulate_panel(&spec, t_len, s, SimOptions::default()).ok()?;
                    let est = smoothed_spectrum(&panel, &grid, bandwidth, KernelSpec::Epanechnikov).ok()?;
                    l1_spectral_error(&est.field, &truth, d_tilde).ok()
                })
                .collect();
            let ok: Vec<f64> = errs.iter().flatten().copied().collect();
            if ok.len() < 2 {
                return Err(config(format!("too few successful replications at T = {t_len}")));
            }
            let k = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / k;
            let std = (ok.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            Ok(L1Point {
                t_len,
                mean,
                std,
                delta: delta_rate(t_len, bandwidth, spread)?,
                failures: errs.len() - ok.len(),
            })
        })
        .collect()
}

fn l1_figure(ov: &FigureOverrides) -> Result<FigureOutput> {
    let preset = ov.preset.unwrap_or(Preset::CompanionRank2);
    let n = ov.n.unwrap_or(preset.default_n());
    let ts = ov.ts.clone().unwrap_or(L1_TS.to_vec());
    let pts = l1_curve(
        preset,
        n,
        &ts,
        ov.reps.unwrap_or(20),
        ov.grid_size.unwrap_or(L1_GRID),
        ov.seed.unwrap_or(DEFAULT_FIGURE_SEED),
    )?;
    let mut csv = String::from("T,mean_error,std_error,delta,error_over_delta\n");
    for p in &pts {
        let _ = writeln!(csv, "{},{:.17e},{:.17e},{:.17e},{:.17e}", p.t_len, p.mean, p.std, p.delta, p.mean / p.delta);
    }
    let fit = if pts.len() >= 5 {
        loglog_fit(&pts.iter().map(|p| (p.t_len as f64, p.mean)).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    Ok(FigureOutput {
        kind: FigureKind::L1,
        csv,
        fit,
        summary: json!({"preset": preset.name(), "n": n, "points": pts}),
    })
}

/// Defaults of the main-term experiment.
pub fn mainterm_config(reps: usize) -> MainTermConfig {
    MainTermConfig {
        i: 0,
        t: 50,
        b: 0.4,
        beta: 0.6,
        c_m: 50.0,
        reps,
        kernel: KernelSpec::Epanechnikov,
        oracle_grid: 1 << 12,
    }
}

fn mainterm_figure(ov: &FigureOverrides) -> Result<FigureOutput> {
    let preset = ov.preset.unwrap_or(Preset::CompanionRank2);
    let n = ov.n.unwrap_or(20);
    let spec = preset.spec(n)?;
    let cfg = mainterm_config(ov.reps.unwrap_or(20));
    let seed = ov.seed.unwrap_or(DEFAULT_FIGURE_SEED);
    let ts = ov.ts.clone().unwrap_or(MAINTERM_TS.to_vec());
    let pts = ts
        .iter()
        .map(|&t| main_term_moment(&spec, &cfg, t, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("T,M,delta,rms,m_delta_sqrt_n,delta_sqrt_n,rms_over_m_delta_sqrt_n\n");
    for p in &pts {
        let _ = writeln!(
            csv,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.t_len,
            p.max_lag,
            p.delta,
            p.rms,
            p.m_delta_sqrt_n,
            p.delta_sqrt_n,
            p.rms / p.m_delta_sqrt_n
        );
    }
    Ok(FigureOutput {
        kind: FigureKind::Mainterm,
        csv,
        fit: None,
        summary: json!({"preset": preset.name(), "n": n, "config": cfg, "points": pts}),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supplied_norms_pass_through() {
        let ov = FigureOverrides {
            norms: Some((1..=200).map(|h| (h, 1.0 / h as f64)).collect()),
            ..Default::default()
        };
        let out = run_figure(FigureKind::Decay, &ov, Some(1)).unwrap();
        assert!((out.fit.unwrap().slope + 1.0).abs() < 1e-9);
        assert_eq!(out.csv.lines().count(), 201);
    }

    #[test]
    fn kinds_parse() {
        for k in [FigureKind::Eigengap, FigureKind::Decay, FigureKind::L1, FigureKind::Mainterm] {
            assert_eq!(k.name().parse::<FigureKind>().unwrap(), k);
        }
        assert!("bogus".parse::<FigureKind>().is_err());
    }

    #[test]
    fn small_l1_curve_runs() {
        let pts = l1_curve(Preset::CompanionRank2, 6, &[64, 128], 3, 64, 1).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.mean > 0.0 && p.failures == 0));
    }
}
