//! Randomised invariants.

use lmgdfm::diagnostics::r_criterion;
use lmgdfm::eigenproj::{hermitian_eig, leading_projection, subspace_distance};
use lmgdfm::harness::{ExperimentConfig, Preset};
use lmgdfm::theory::{gamma_star, gap_dominance_check, rho_recursion, truncation_m, tune_factor_hetero, tune_row_hetero};
use lmgdfm::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

fn hermitian(n: usize) -> impl Strategy<Value = DMatrix<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |v| {
        let a = DMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| C64::new(re, im)));
        &a + a.adjoint()
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn leading_projection_is_an_orthogonal_projection(a in hermitian(6), q in 1usize..6) {
        let p = leading_projection(&hermitian_eig(&a).unwrap(), q).unwrap();
        prop_assert!((&p * &p - &p).norm() < 1e-9);
        prop_assert!((&p - p.adjoint()).norm() < 1e-12);
        prop_assert!((p.trace().re - q as f64).abs() < 1e-9);
        prop_assert!(subspace_distance(&p, &p).unwrap() < 1e-9);
    }

    #[test]
    fn r_criterion_is_quadratic_in_the_error(
        v in prop::collection::vec(-5.0..5.0f64, 12),
        e in prop::collection::vec(-1.0..1.0f64, 12),
        c in 0.1..10.0f64,
    ) {
        let chi = DMatrix::from_vec(3, 4, v);
        prop_assume!(chi.norm() > 1e-3);
        let err = DMatrix::from_vec(3, 4, e);
        let r1 = r_criterion(&(&chi + &err), &chi).unwrap();
        let r2 = r_criterion(&(&chi + &err * c), &chi).unwrap();
        prop_assert!((r2 - c * c * r1).abs() <= 1e-9 * (1.0 + r2));
        prop_assert!(r_criterion(&chi, &chi).unwrap() == 0.0);
    }

    #[test]
    fn rho_is_nonincreasing_and_consistent(mut d in prop::collection::vec(0.0..0.49f64, 1..5)) {
        d.sort_by(|a, b| b.total_cmp(a));
        d.dedup();
        prop_assume!(d.windows(2).all(|w| w[0] - w[1] > 1e-6));
        let check = gap_dominance_check(&d).unwrap();
        prop_assert_eq!(check.rho[0], 1.0);
        prop_assert!(check.rho.windows(2).all(|w| w[1] <= w[0]));
        match rho_recursion(&d) {
            Ok(rho) => {
                prop_assert!(check.holds);
                prop_assert_eq!(&rho[..], &check.rho[1..]);
                prop_assert!(rho.iter().all(|&r| r > 0.0));
            }
            Err(_) => prop_assert!(!check.holds),
        }
    }

    /// At the optimum both error terms balance: `kappa* = 1 / (2 (gamma* - m*))`.
    #[test]
    fn tuning_balances_the_two_rates(d in 0.0..0.49f64, delta in 0.0..0.49f64, rho in 0.01..1.0f64) {
        let g = gamma_star(delta).unwrap();
        for t in [tune_factor_hetero(d, delta, rho).unwrap(), tune_row_hetero(d, delta).unwrap()] {
            if let (Some(m), Some(k)) = (t.m_star, t.kappa_star) {
                prop_assert!(t.is_valid());
                prop_assert!(m > 0.0 && m < g);
                prop_assert!((k * 2.0 * (g - m) - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(!t.is_valid());
            }
        }
    }

    #[test]
    fn truncation_shrinks_as_delta_grows(delta in 1e-4..1.0f64, n in 1usize..500, beta in 0.1..0.9f64) {
        let m1 = truncation_m(delta, n, beta, 50.0).unwrap();
        let m2 = truncation_m(2.0 * delta, n, beta, 50.0).unwrap();
        prop_assert!(m1 >= 1 && m2 <= m1);
        prop_assert!(truncation_m(delta, 4 * n, beta, 50.0).unwrap() <= m1);
    }

    #[test]
    fn config_survives_json(n in 4usize..200, t in 16usize..400, b in 0.1..0.9f64, seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::preset(Preset::Rank2Factor, n, t);
        cfg.bandwidth_exponent = b;
        cfg.seed = seed;
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
