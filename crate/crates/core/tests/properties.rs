use ascmlab_core::solver::{augment_weights, fit_scm, fit_weights, ScmConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (DVector<f64>, DMatrix<f64>)> {
    (2usize..9, 1usize..12).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(-10.0f64..10.0, p),
            prop::collection::vec(-10.0f64..10.0, n * p),
        )
            .prop_map(move |(x1, x0)| (DVector::from_vec(x1), DMatrix::from_row_slice(n, p, &x0)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn scm_weights_lie_on_the_simplex((x1, x0) in instance()) {
        let fit = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        prop_assert!(fit.gamma.iter().all(|&g| g >= 0.0));
        prop_assert!((fit.gamma.sum() - 1.0).abs() < 1e-12);
        // never worse than the best single donor
        let best_vertex = (0..x0.nrows())
            .map(|i| (&x1 - x0.row(i).transpose()).norm_squared())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(fit.objective <= best_vertex * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn augmented_weights_sum_to_one((x1, x0) in instance(), log_lambda in -4.0f64..6.0) {
        let fit = fit_weights(&x1, &x0, &ScmConfig::default(), 10f64.powf(log_lambda)).unwrap();
        let total: f64 = fit.gamma_aug.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-8, "sum {}", total);
    }

    #[test]
    fn augmentation_never_worsens_predictor_fit((x1, x0) in instance(), log_lambda in -4.0f64..6.0) {
        let fit = fit_weights(&x1, &x0, &ScmConfig::default(), 10f64.powf(log_lambda)).unwrap();
        prop_assert!(fit.pre_rmspe_aug <= fit.pre_rmspe_scm * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn huge_penalty_returns_scm_weights((x1, x0) in instance()) {
        let scm = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        let aug = augment_weights(&scm.gamma, &x1, &x0, 1e12).unwrap();
        prop_assert!((aug - scm.gamma).amax() < 1e-6);
    }
}
