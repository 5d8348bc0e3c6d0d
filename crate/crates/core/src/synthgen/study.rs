//! Monte Carlo harness: many seeded panels, one estimator configuration.

use std::collections::BTreeSet;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_synthetic_panel, SyntheticFactorConfig, SyntheticPanel};
use crate::error::{PanelError, Result};
use crate::estimate::{estimate, EstimatorConfig, LambdaChoice};
use crate::inference::{in_space_placebo_with, jackknife_band_from, refit_without_each};
use crate::solver::LambdaRule;
use crate::specs::{PredictorSpec, ResolvedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Estimated minus true ATT.
    AttBias,
    /// Whether the jackknife+ band covers the true counterfactual, per day.
    Coverage,
    /// Treated unit's in-space placebo rank.
    PlaceboRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicationStudy {
    pub base: SyntheticFactorConfig,
    pub n_replications: usize,
    /// Replication `i` uses `seed + i` unless `seeds` is given.
    pub seed: u64,
    pub seeds: Option<Vec<u64>>,
    pub metrics: Vec<Metric>,
    pub spec: String,
    pub alpha: f64,
    pub lambda_rule: LambdaRule,
}

impl Default for ReplicationStudy {
    fn default() -> Self {
        Self {
            base: SyntheticFactorConfig::default(),
            n_replications: 200,
            seed: 0,
            seeds: None,
            metrics: vec![Metric::AttBias, Metric::Coverage, Metric::PlaceboRank],
            spec: "a0".into(),
            alpha: 0.05,
            lambda_rule: LambdaRule::OneSe,
        }
    }
}

impl ReplicationStudy {
    /// Per-replication seeds; must be distinct.
    pub fn seed_list(&self) -> std::result::Result<Vec<u64>, PanelError> {
        let seeds: Vec<u64> = match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.n_replications as u64)
                .map(|i| self.seed.wrapping_add(i))
                .collect(),
        };
        if seeds.len() != self.n_replications {
            return Err(PanelError::InvalidConfig(format!(
                "{} seeds given for {} replications",
                seeds.len(),
                self.n_replications
            )));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(PanelError::InvalidConfig("replication seeds must be distinct".into()));
        }
        Ok(seeds)
    }

    fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

/// Outcome of one replication. Metric fields are `None` when not requested
/// or when the replication failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub true_att: f64,
    pub att: Option<f64>,
    pub att_error: Option<f64>,
    pub lambda: Option<f64>,
    pub pre_rmspe: Option<f64>,
    /// Post-treatment days covered by the band.
    pub covered: Option<Vec<bool>>,
    pub placebo_rank: Option<usize>,
    pub n_units: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub n_replications: usize,
    pub failures: usize,
    pub spec: String,
    pub alpha: f64,
    pub true_att: f64,
    pub mean_att: f64,
    pub att_error_mean: f64,
    pub att_error_sd: f64,
    pub att_error_max_abs: f64,
    /// Coverage rate per post-treatment day.
    pub coverage_by_day: Vec<f64>,
    pub coverage_min: f64,
    pub coverage_mean: f64,
    /// `rank_histogram[r − 1]` counts replications where the treated unit ranked `r`.
    pub rank_histogram: Vec<usize>,
    pub rank_one_frequency: f64,
    pub n_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub summary: StudySummary,
    pub records: Vec<ReplicationRecord>,
}

fn run_one(
    study: &ReplicationStudy,
    spec: &PredictorSpec,
    config: &EstimatorConfig,
    replication: usize,
    seed: u64,
) -> ReplicationRecord {
    let cfg = SyntheticFactorConfig {
        seed,
        ..study.base.clone()
    };
    let mut rec = ReplicationRecord {
        replication,
        seed,
        true_att: f64::NAN,
        att: None,
        att_error: None,
        lambda: None,
        pre_rmspe: None,
        covered: None,
        placebo_rank: None,
        n_units: None,
        error: None,
    };
    let run = |rec: &mut ReplicationRecord| -> Result<()> {
        let synth: SyntheticPanel = generate_synthetic_panel(&cfg)?;
        rec.true_att = synth.true_att;
        let panel = synth.aligned()?;
        let resolved: ResolvedSpec = spec.resolve(panel.t0());
        let est = estimate(&panel, &resolved, config)?;
        rec.att = Some(est.gap.att);
        rec.lambda = Some(est.fit.lambda);
        rec.pre_rmspe = Some(est.gap.pre_rmspe);
        if study.wants(Metric::AttBias) {
            rec.att_error = Some(est.gap.att - synth.true_att);
        }
        if study.wants(Metric::Coverage) {
            let refits = refit_without_each(&panel, &resolved, config, &est.donors);
            let band = jackknife_band_from(&panel, &resolved, config, &est, &refits, study.alpha)?;
            rec.covered = Some(
                (est.t0..est.t_end)
                    .map(|d| band.lower[d] <= synth.counterfactual[d] && synth.counterfactual[d] <= band.upper[d])
                    .collect(),
            );
        }
        if study.wants(Metric::PlaceboRank) {
            let table = in_space_placebo_with(&panel, &resolved, config, &est)?;
            rec.placebo_rank = Some(table.treated_rank);
            rec.n_units = Some(table.denominator);
        }
        Ok(())
    };
    if let Err(e) = run(&mut rec) {
        warn!("replication {replication} (seed {seed}) failed: {e}");
        rec.error = Some(e.to_string());
    } else {
        debug!("replication {replication} (seed {seed}) done");
    }
    rec
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Aggregates records. Depends only on the set of records, not on the order
/// in which replications ran, since records are sorted by replication first.
pub fn summarize_study(study: &ReplicationStudy, records: &[ReplicationRecord]) -> StudySummary {
    let mut recs: Vec<&ReplicationRecord> = records.iter().collect();
    recs.sort_by_key(|r| r.replication);
    let ok: Vec<&ReplicationRecord> = recs.iter().copied().filter(|r| r.error.is_none()).collect();

    let atts: Vec<f64> = ok.iter().filter_map(|r| r.att).collect();
    let errs: Vec<f64> = ok.iter().filter_map(|r| r.att_error).collect();

    let bands: Vec<&Vec<bool>> = ok.iter().filter_map(|r| r.covered.as_ref()).collect();
    let days = bands.iter().map(|b| b.len()).min().unwrap_or(0);
    let coverage_by_day: Vec<f64> = (0..days)
        .map(|d| bands.iter().filter(|b| b[d]).count() as f64 / bands.len() as f64)
        .collect();

    let n_units = ok.iter().filter_map(|r| r.n_units).max().unwrap_or(0);
    let mut rank_histogram = vec![0usize; n_units];
    let mut ranked = 0usize;
    for r in ok.iter().filter_map(|r| r.placebo_rank) {
        if r >= 1 && r <= n_units {
            rank_histogram[r - 1] += 1;
            ranked += 1;
        }
    }

    StudySummary {
        n_replications: records.len(),
        failures: recs.len() - ok.len(),
        spec: study.spec.clone(),
        alpha: study.alpha,
        true_att: recs.first().map_or(f64::NAN, |r| r.true_att),
        mean_att: mean(&atts),
        att_error_mean: mean(&errs),
        att_error_sd: sd(&errs),
        att_error_max_abs: errs.iter().fold(f64::NAN, |m, e| e.abs().max(m)),
        coverage_min: coverage_by_day.iter().copied().fold(f64::NAN, f64::min),
        coverage_mean: mean(&coverage_by_day),
        coverage_by_day,
        rank_one_frequency: if ranked == 0 {
            f64::NAN
        } else {
            rank_histogram.first().copied().unwrap_or(0) as f64 / ranked as f64
        },
        rank_histogram,
        n_units,
    }
}

/// Runs every replication (in parallel) and aggregates. Replication
/// failures are recorded and counted; only an invalid study is an error.
pub fn run_replication_study(study: &ReplicationStudy) -> Result<StudyReport> {
    let seeds = study.seed_list()?;
    let spec: PredictorSpec = study.spec.parse()?;
    if !(study.alpha > 0.0 && study.alpha <= 0.5) {
        return Err(crate::error::InferenceError::InvalidAlpha(study.alpha).into());
    }
    let config = EstimatorConfig {
        lambda: LambdaChoice::Cv {
            rule: study.lambda_rule,
            grid: None,
        },
        ..EstimatorConfig::default()
    };
    let records: Vec<ReplicationRecord> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| run_one(study, &spec, &config, i, seed))
        .collect();
    Ok(StudyReport {
        summary: summarize_study(study, &records),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::TreatmentPath;

    fn small(metrics: Vec<Metric>) -> ReplicationStudy {
        ReplicationStudy {
            base: SyntheticFactorConfig {
                n_donors: 5,
                t0: 10,
                t1: 8,
                noise_sd: 0.0,
                treatment_path: TreatmentPath::Constant(0.0),
                ..Default::default()
            },
            n_replications: 10,
            seed: 7,
            metrics,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_null_recovers_zero() {
        let report = run_replication_study(&small(vec![Metric::AttBias])).unwrap();
        assert_eq!(report.summary.failures, 0);
        for r in &report.records {
            assert!(r.att_error.unwrap().abs() < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn repeated_runs_identical() {
        let s = small(vec![Metric::AttBias, Metric::PlaceboRank]);
        let a = serde_json::to_string(&run_replication_study(&s).unwrap()).unwrap();
        let b = serde_json::to_string(&run_replication_study(&s).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_ignores_record_order() {
        let s = small(vec![Metric::AttBias, Metric::PlaceboRank]);
        let report = run_replication_study(&s).unwrap();
        let mut rev = report.records.clone();
        rev.reverse();
        // compared as JSON: unrequested metrics are NaN
        assert_eq!(
            serde_json::to_string(&summarize_study(&s, &rev)).unwrap(),
            serde_json::to_string(&report.summary).unwrap()
        );
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let s = ReplicationStudy {
            n_replications: 2,
            seeds: Some(vec![3, 3]),
            ..Default::default()
        };
        assert!(run_replication_study(&s).is_err());
    }
}
