//! Zero-noise panels whose treated unit is a fixed convex combination of
//! donors: every specification must reproduce the counterfactual.

use ascmlab_core::estimate::{estimate, EstimatorConfig};
use ascmlab_core::inference::run_spec_grid;
use ascmlab_core::specs::enumerate_specs;
use ascmlab_core::synthgen::{generate_synthetic_panel, SyntheticFactorConfig, TreatedDesign, TreatmentPath};

fn hull_config(seed: u64, tau: f64) -> SyntheticFactorConfig {
    SyntheticFactorConfig {
        seed,
        treated: TreatedDesign::Weights(vec![0.3, 0.0, 0.2, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0]),
        treatment_path: TreatmentPath::Constant(tau),
        ..SyntheticFactorConfig::preset("convex-hull").unwrap()
    }
}

#[test]
fn every_spec_recovers_counterfactual() {
    for seed in [1, 2, 3] {
        let s = generate_synthetic_panel(&hull_config(seed, 0.0)).unwrap();
        let panel = s.aligned().unwrap();
        for spec in enumerate_specs() {
            let est = estimate(&panel, &spec.resolve(panel.t0()), &EstimatorConfig::default()).unwrap();
            assert!(est.gap.pre_rmspe < 1e-8, "{} seed {seed}: pre-RMSPE {}", spec.id, est.gap.pre_rmspe);
            let worst = est
                .synthetic_aug
                .iter()
                .zip(&s.counterfactual)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "{} seed {seed}: counterfactual off by {worst}", spec.id);
        }
    }
}

#[test]
fn injected_effect_recovered_by_all_specs() {
    let s = generate_synthetic_panel(&hull_config(4, -5.0)).unwrap();
    let report = run_spec_grid(&s.aligned().unwrap(), &EstimatorConfig::default(), 0.05);
    assert_eq!(report.rows.len(), 16);
    for row in &report.rows {
        assert!(row.error.is_none(), "{row:?}");
        assert!((row.att + 5.0).abs() < 1e-8, "{row:?}");
    }
    let summary = report.summary.unwrap();
    assert!(summary.mad.iter().all(|m| m.abs() < 1e-8));
}

#[test]
fn noisy_effect_within_band_for_all_specs() {
    let cfg = SyntheticFactorConfig {
        seed: 11,
        noise_sd: 0.1,
        ..hull_config(11, -5.0)
    };
    let s = generate_synthetic_panel(&cfg).unwrap();
    let report = run_spec_grid(&s.aligned().unwrap(), &EstimatorConfig::default(), 0.05);
    for row in &report.rows {
        assert!((-7.0..=-3.0).contains(&row.att), "{row:?}");
    }
}

#[test]
fn flat_cv_curve_picks_largest_lambda() {
    let s = generate_synthetic_panel(&hull_config(5, 0.0)).unwrap();
    let panel = s.aligned().unwrap();
    for id in ["a0", "c4"] {
        let spec: ascmlab_core::specs::PredictorSpec = id.parse().unwrap();
        let est = estimate(&panel, &spec.resolve(panel.t0()), &EstimatorConfig::default()).unwrap();
        let cv = est.cv.unwrap();
        assert!(cv.cv_mse.iter().all(|c| *c < 1e-12), "{id}: {:?}", cv.cv_mse);
        assert_eq!(cv.lambda_one_se, *cv.lambda_grid.last().unwrap(), "{id}");
    }
}
