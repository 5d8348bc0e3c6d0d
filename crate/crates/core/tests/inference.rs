use std::collections::BTreeMap;

use ascmlab_core::estimate::{estimate, EstimatorConfig};
use ascmlab_core::inference::{
    in_space_placebo, in_time_placebo, jackknife_plus_band, leave_one_out_donors, spec_summary,
};
use ascmlab_core::panel::{
    align_epidemic_day, build_mobility_index, load_panel, write_panel, AlignedPanel, ColumnSchema,
    MobilityConfig, StaticSchema,
};
use ascmlab_core::specs::{enumerate_specs, PredictorSpec, ResolvedSpec};
use ascmlab_core::synthgen::{
    generate_synthetic_panel, run_replication_study, Metric, ReplicationStudy, SyntheticFactorConfig,
    TreatedDesign, TreatmentPath,
};

fn spec(id: &str, panel: &AlignedPanel) -> ResolvedSpec {
    id.parse::<PredictorSpec>().unwrap().resolve(panel.t0())
}

fn noisy(n_donors: usize, seed: u64) -> SyntheticFactorConfig {
    SyntheticFactorConfig {
        n_donors,
        seed,
        noise_sd: 0.3,
        treatment_path: TreatmentPath::Constant(0.0),
        ..Default::default()
    }
}

#[test]
fn loo_refits_match_runs_on_reduced_files() {
    let s = generate_synthetic_panel(&noisy(4, 5)).unwrap();
    let panel = s.aligned().unwrap();
    let sp = spec("c4", &panel);
    let cfg = EstimatorConfig::default();
    let base = estimate(&panel, &sp, &cfg).unwrap();
    let report = leave_one_out_donors(&panel, &sp, &cfg, &base).unwrap();
    assert_eq!(report.entries.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    for entry in &report.entries {
        let reduced = s.panel.without_unit(&entry.donor).unwrap();
        let (o, c) = (dir.path().join("o.csv"), dir.path().join("c.csv"));
        write_panel(&reduced, &o, &c).unwrap();
        let loaded = load_panel(&o, &c, &ColumnSchema::default(), &StaticSchema::default(), None).unwrap();
        let aligned = align_epidemic_day(&loaded, 1.0).unwrap();
        let aligned = build_mobility_index(&aligned, &MobilityConfig::default()).unwrap();
        let scratch = estimate(&aligned, &sp, &cfg).unwrap();
        let gap = entry.gap.as_ref().unwrap();
        if entry.refit {
            for (a, b) in gap.gap.iter().zip(&scratch.gap.gap) {
                assert!((a - b).abs() < 1e-9, "{}: {a} vs {b}", entry.donor);
            }
        } else {
            // unused donor: the baseline stands in for the refit
            assert_eq!(gap, &base.gap);
            for (a, b) in gap.gap.iter().zip(&scratch.gap.gap) {
                assert!((a - b).abs() < 1e-6, "{}: {a} vs {b}", entry.donor);
            }
        }
    }
}

#[test]
fn placebo_p_value_is_rank_share() {
    let s = generate_synthetic_panel(&noisy(8, 2)).unwrap();
    let panel = s.aligned().unwrap();
    let t = in_space_placebo(&panel, &spec("a0", &panel), &EstimatorConfig::default()).unwrap();
    assert_eq!(t.denominator, 9);
    assert_eq!(t.rows.len(), 8);
    let mut ratios: Vec<f64> = t.rows.iter().map(|r| r.raw_ratio).collect();
    ratios.push(t.treated_ratio);
    let rank = ratios.iter().filter(|&&r| r >= t.treated_ratio).count();
    assert_eq!(t.treated_rank, rank);
    assert_eq!(t.p_value, rank as f64 / 9.0);
    for r in &t.rows {
        assert!((r.rmspe_ratio - r.raw_ratio / t.treated_ratio).abs() < 1e-12);
        let own = ratios.iter().filter(|&&x| x >= r.raw_ratio).count();
        assert_eq!(r.p_value, own as f64 / 9.0);
    }
}

#[test]
fn dominant_effect_ranks_first() {
    let cfg = SyntheticFactorConfig {
        treatment_path: TreatmentPath::Constant(-60.0),
        ..noisy(8, 3)
    };
    let s = generate_synthetic_panel(&cfg).unwrap();
    let panel = s.aligned().unwrap();
    let t = in_space_placebo(&panel, &spec("a0", &panel), &EstimatorConfig::default()).unwrap();
    assert_eq!(t.treated_rank, 1);
    assert_eq!(t.p_value, 1.0 / 9.0);
}

#[test]
fn in_time_placebo_stops_at_true_t0() {
    let s = generate_synthetic_panel(&SyntheticFactorConfig::preset("convex-hull").unwrap()).unwrap();
    let panel = s.aligned().unwrap();
    for fake in [7, 9, 11] {
        let p = in_time_placebo(&panel, &spec("c4", &panel), &EstimatorConfig::default(), fake).unwrap();
        assert_eq!(p.gap.gap.len(), panel.t0());
        assert_eq!(p.fake_t0, fake);
        assert!(p.gap.gap.iter().all(|g| g.abs() < 1e-8), "{:?}", p.gap.gap);
    }
    assert!(in_time_placebo(&panel, &spec("a0", &panel), &EstimatorConfig::default(), 15).is_err());
}

#[test]
fn wider_level_nests_narrower_band() {
    let s = generate_synthetic_panel(&noisy(8, 4)).unwrap();
    let panel = s.aligned().unwrap();
    let sp = spec("a0", &panel);
    let cfg = EstimatorConfig::default();
    let b05 = jackknife_plus_band(&panel, &sp, &cfg, 0.05).unwrap();
    let b20 = jackknife_plus_band(&panel, &sp, &cfg, 0.2).unwrap();
    for d in 0..b05.lower.len() {
        assert!(b05.lower[d] <= b20.lower[d] && b20.upper[d] <= b05.upper[d]);
        assert!(b05.gap_lower[d] <= b05.gap_upper[d]);
    }
    assert_eq!(b05.n_scores, 8 * panel.t0());
    assert!(jackknife_plus_band(&panel, &sp, &cfg, 0.0).is_err());
}

#[test]
fn spec_summary_matches_reference_script() {
    let gaps: BTreeMap<String, Vec<f64>> = enumerate_specs()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let series = (0..6)
                .map(|d| {
                    (0.37 * (k + 1) as f64 * (d + 1) as f64).sin() * (k + 1) as f64
                        + 0.1 * d as f64 * (k % 3) as f64
                })
                .collect();
            (s.id.to_string(), series)
        })
        .collect();
    let out = spec_summary(&gaps).unwrap();
    let median = [
        -0.6620182699605832,
        -0.9237543923362594,
        0.36690734752566967,
        -0.3799108520818524,
        0.15080146057915655,
        -0.31484819445527307,
    ];
    let mad = [
        4.833790168979621,
        4.54521508929568,
        4.111982754145632,
        5.213328421951202,
        4.446862317539187,
        4.789251008058622,
    ];
    let mean = [
        -2.839193696503881,
        -1.2814187539453337,
        -0.6788774176105881,
        -0.31389251696222553,
        -0.042377059748886725,
        0.1843164973622636,
    ];
    let lower = [
        -12.746493692409636,
        -12.28679211557546,
        -9.913049537838411,
        -13.413231906959858,
        -10.96635433326881,
        -12.287975714601828,
    ];
    for d in 0..6 {
        assert!((out.median[d] - median[d]).abs() < 1e-12);
        assert!((out.mad[d] - mad[d]).abs() < 1e-12);
        assert!((out.mean[d] - mean[d]).abs() < 1e-12);
        assert!((out.lower[d] - lower[d]).abs() < 1e-12);
    }
}

#[test]
fn lag_pattern_matches_committed_grid() {
    let mut rdr = csv::Reader::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/star_pattern.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    for spec in enumerate_specs() {
        let col = header.iter().position(|h| h == spec.id).unwrap();
        let expected: Vec<String> = rows
            .iter()
            .filter(|r| &r[col] == "1")
            .map(|r| r[0].to_string())
            .collect();
        assert_eq!(spec.resolve(15).row_labels(), expected, "spec {}", spec.id);
    }
}

/// Wilcoxon signed-rank, normal approximation with tie correction. Returns
/// the two-sided p-value.
fn signed_rank_p(x: &[f64]) -> f64 {
    let mut v: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = v.len() as f64;
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1].abs() == v[i].abs() {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        for item in &v[i..=j] {
            if *item > 0.0 {
                w_plus += rank;
            }
        }
        i = j + 1;
    }
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean) / var.sqrt();
    statrs::function::erf::erfc(z.abs() / 2f64.sqrt())
}

#[test]
fn signed_rank_reference() {
    // scipy.stats.wilcoxon(x, correction=False, method="approx").pvalue
    let x = [1.5, -0.3, 2.2, 0.7, -1.1, 0.4, 3.0, -0.2, 0.9, 1.8];
    assert!((signed_rank_p(&x) - 0.05933611988090862).abs() < 1e-10);
}

#[test]
fn null_gaps_symmetric() {
    let study = ReplicationStudy {
        base: SyntheticFactorConfig {
            treatment_path: TreatmentPath::Constant(0.0),
            treated: TreatedDesign::Dirichlet { concentration: 1.0 },
            ..Default::default()
        },
        n_replications: 200,
        seed: 1000,
        metrics: vec![Metric::AttBias],
        ..Default::default()
    };
    let report = run_replication_study(&study).unwrap();
    assert_eq!(report.summary.failures, 0);
    let atts: Vec<f64> = report.records.iter().map(|r| r.att.unwrap()).collect();
    let p = signed_rank_p(&atts);
    assert!(p > 0.01, "signed-rank p = {p}");
}
