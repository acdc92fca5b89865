//! Checks against closed forms computed independently of the library.

use std::f64::consts::PI;

use lmgdfm::filterbank::{apply_filter_range, oracle_bank};
use lmgdfm::fracsim::{
    analytic_spectrum, derive_seed, frac_coeffs, simulate_panel, transfer_coeffs, Entry, Idiosyncratic, ModelSpec,
    SimOptions,
};
use lmgdfm::diagnostics::r_criterion;
use lmgdfm::spectral::{smoothed_spectrum, FrequencyGrid, KernelSpec};
use lmgdfm::C64;
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{gamma, ln_gamma};

/// `psi_j = Gamma(j + d) / (Gamma(d) Gamma(j + 1))`.
fn psi_gamma(d: f64, j: usize) -> f64 {
    (ln_gamma(j as f64 + d) - ln_gamma(d) - ln_gamma(j as f64 + 1.0)).exp()
}

#[test]
fn fractional_coefficients_match_gamma_ratio() {
    for d in [0.05, 0.2, 0.35, 0.49] {
        let psi = frac_coeffs(d, 3000).unwrap();
        assert_eq!(psi[0], 1.0);
        for j in [1, 2, 3, 10, 100, 999, 3000] {
            let want = psi_gamma(d, j);
            assert!((psi[j] - want).abs() <= 1e-10 * want, "d = {d}, j = {j}: {} vs {want}", psi[j]);
        }
    }
}

#[test]
fn one_pole_coefficients_are_a_convolution() {
    let (d, a) = (0.3, 0.6);
    let b = transfer_coeffs(&Entry::one_pole(d, 2.0, a), 200).unwrap();
    for j in [0usize, 1, 7, 50, 200] {
        let want: f64 = (0..=j).map(|m| psi_gamma(d, m) * a.powi((j - m) as i32)).sum::<f64>() * 2.0;
        assert!((b[j] - want).abs() <= 1e-10 * want.abs().max(1.0), "j = {j}");
    }
}

#[test]
fn population_spectrum_matches_closed_form() {
    let n = 4;
    let alpha = [0.2, 0.4, 0.6, 0.8];
    let spec = ModelSpec::from_fn(n, 1, Idiosyncratic::WhiteNoise { sigma: 1.5 }, |i, _| {
        Entry::one_pole(0.3, 1.0, alpha[i])
    })
    .unwrap();
    for theta in [-2.0, 0.05, 1.0, PI - 1e-3] {
        let z = C64::from_polar(1.0, -theta);
        let b = DVector::from_iterator(n, alpha.iter().map(|&a| (C64::new(1.0, 0.0) - z).powf(-0.3) / (1.0 - z * a)));
        let want = (&b * b.adjoint() + DMatrix::identity(n, n) * C64::new(2.25, 0.0)) / C64::new(2.0 * PI, 0.0);
        let got = analytic_spectrum(&spec, theta).unwrap();
        assert!((got - want).norm() <= 1e-12, "theta = {theta}");
    }
}

fn acf(x: &[f64], lag: usize) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let c = |k: usize| x.iter().zip(&x[k..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / x.len() as f64;
    c(lag) / c(0)
}

/// ARFIMA(0, d, 0) with unit shocks: `gamma_0 = Gamma(1 - 2d) / Gamma(1 - d)^2`,
/// `rho_1 = d / (1 - d)`, `rho_2 = d (1 + d) / ((1 - d)(2 - d))`.
#[test]
fn simulated_fractional_noise_has_the_right_moments() {
    let d = 0.2;
    let spec = ModelSpec::from_fn(1, 1, Idiosyncratic::WhiteNoise { sigma: 0.0 }, |_, _| Entry::one_pole(d, 1.0, 0.0))
        .unwrap();
    let (mut var, mut r1, mut r2) = (0.0, 0.0, 0.0);
    let reps = 12;
    for r in 0..reps {
        let p = simulate_panel(&spec, 4000, derive_seed(&[5, r]), SimOptions::default()).unwrap();
        let x: Vec<f64> = p.observations().row(0).iter().copied().collect();
        var += x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 / reps as f64;
        r1 += acf(&x, 1) / reps as f64;
        r2 += acf(&x, 2) / reps as f64;
    }
    let g0 = gamma(1.0 - 2.0 * d) / gamma(1.0 - d).powi(2);
    assert!((var / g0 - 1.0).abs() < 0.06, "variance {var} vs {g0}");
    assert!((r1 - d / (1.0 - d)).abs() < 0.02, "rho_1 {r1}");
    assert!((r2 - d * (1.0 + d) / ((1.0 - d) * (2.0 - d))).abs() < 0.02, "rho_2 {r2}");
}

#[test]
fn smoothed_periodogram_of_white_noise_is_flat() {
    let n = 3;
    let spec = ModelSpec::from_fn(n, 1, Idiosyncratic::WhiteNoise { sigma: 1.0 }, |_, _| Entry::one_pole(0.0, 0.0, 0.0))
        .unwrap();
    let t_len = 4096;
    let panel = simulate_panel(&spec, t_len, 17, SimOptions::default()).unwrap();
    let grid = FrequencyGrid::midpoint(32).unwrap();
    let est = smoothed_spectrum(&panel, &grid, (t_len as f64).powf(-0.5), KernelSpec::Epanechnikov).unwrap();
    let level = 1.0 / (2.0 * PI);
    let (mut mean_diag, mut mean_off) = (0.0, 0.0);
    for k in 0..grid.len() {
        let s = est.field.at(k);
        for i in 0..n {
            mean_diag += s[(i, i)].re / (grid.len() * n) as f64;
            for j in (0..n).filter(|&j| j != i) {
                mean_off += s[(i, j)].norm() / (grid.len() * n * (n - 1)) as f64;
            }
        }
    }
    assert!((mean_diag / level - 1.0).abs() < 0.05, "{mean_diag} vs {level}");
    // each window averages about B T / pi = 20 periodogram ordinates
    assert!(mean_off < 0.3 * level, "{mean_off}");
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn replication_streams_are_uncorrelated() {
    let spec = ModelSpec::from_fn(10, 1, Idiosyncratic::WhiteNoise { sigma: 1.0 }, |_, _| Entry::one_pole(0.0, 1.0, 0.0))
        .unwrap();
    let draw = |rep: u64| simulate_panel(&spec, 1000, derive_seed(&[1, 10, 1000, rep]), SimOptions::default()).unwrap();
    let (a, b) = (draw(0), draw(1));
    let flat = |m: &DMatrix<f64>| m.iter().copied().collect::<Vec<f64>>();
    let xa = flat(a.idiosyncratic().unwrap());
    let xb = flat(b.idiosyncratic().unwrap());
    assert_eq!(xa.len(), 10_000);
    assert!(corr(&xa, &xb).abs() <= 0.1);
    assert!(corr(&flat(a.common().unwrap()), &flat(b.common().unwrap())).abs() <= 0.1);
    assert!(corr(&flat(a.common().unwrap()), &xa).abs() <= 0.1);
}

/// Without noise the population filter reproduces the common component up
/// to the truncation of its coefficients.
#[test]
fn oracle_filter_recovers_noiseless_common_component() {
    let n = 20;
    let spec = ModelSpec::from_fn(n, 1, Idiosyncratic::WhiteNoise { sigma: 1e-6 }, |i, _| {
        Entry::one_pole(0.3, 1.0, 0.2 + 0.6 * i as f64 / (n - 1) as f64)
    })
    .unwrap();
    let bank = oracle_bank(&spec, 40, 1024, None).unwrap();
    let panel = simulate_panel(&spec, 300, 9, SimOptions::default()).unwrap();
    let est = apply_filter_range(&bank, &panel, 60..=240).unwrap();
    let chi = panel.common().unwrap().columns(59, 181).into_owned();
    let r = r_criterion(&est, &chi).unwrap();
    assert!(r < 1e-3, "R = {r}");
}
