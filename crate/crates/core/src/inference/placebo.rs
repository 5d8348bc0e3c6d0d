//! In-space and in-time placebo tests.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GapAnalysis;
use crate::error::{Error, InferenceError, Result};
use crate::estimate::{estimate, Estimate, EstimatorConfig};
use crate::panel::AlignedPanel;
use crate::specs::ResolvedSpec;

/// One unit of the in-space placebo table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRow {
    pub unit: String,
    /// Post/pre RMSPE of this unit.
    pub raw_ratio: f64,
    /// `raw_ratio` divided by the treated unit's ratio.
    pub rmspe_ratio: f64,
    pub att: f64,
    pub pre_rmspe: f64,
    /// Share of ranked units whose ratio is at least this unit's.
    pub p_value: f64,
    pub lambda: f64,
    /// Gap series of this unit against its own synthetic control; empty when
    /// the fit failed.
    pub gap: Vec<f64>,
    /// Set when the fit failed or the ratio is undefined; such rows are not
    /// ranked.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboTable {
    pub treated: String,
    pub treated_ratio: f64,
    pub treated_att: f64,
    /// 1 = largest ratio among ranked units.
    pub treated_rank: usize,
    /// Ranked units, treated included.
    pub denominator: usize,
    /// `treated_rank / denominator`; NaN when the treated ratio is undefined.
    pub p_value: f64,
    /// Donor rows sorted by unit id.
    pub rows: Vec<PlaceboRow>,
}

fn rank_of(ratio: f64, pool: &[f64]) -> usize {
    pool.iter().filter(|&&r| r >= ratio).count()
}

/// Treats every donor in turn, with the original treated unit moved into the
/// donor pool, and ranks post/pre RMSPE ratios.
pub fn in_space_placebo(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
) -> Result<PlaceboTable> {
    if panel.n_donors() < 2 {
        return Err(InferenceError::Insufficient(format!(
            "in-space placebo needs at least 2 donors, found {}",
            panel.n_donors()
        ))
        .into());
    }
    let baseline = estimate(panel, spec, config)?;
    in_space_placebo_with(panel, spec, config, &baseline)
}

/// As [`in_space_placebo`] with an already computed baseline fit.
pub fn in_space_placebo_with(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    baseline: &Estimate,
) -> Result<PlaceboTable> {
    let donors: Vec<String> = panel.donor_ids().iter().map(|s| s.to_string()).collect();
    let fits: Vec<(String, Result<Estimate>)> = donors
        .par_iter()
        .map(|d| {
            let fit = panel
                .with_treated(d)
                .map_err(Error::from)
                .and_then(|p| estimate(&p, spec, config));
            (d.clone(), fit)
        })
        .collect();

    let treated = &baseline.gap;
    let mut ranked: Vec<f64> = Vec::new();
    if !treated.ratio_undefined {
        ranked.push(treated.rmspe_ratio);
    }
    let mut rows: Vec<PlaceboRow> = fits
        .into_iter()
        .map(|(unit, fit)| match fit {
            Ok(e) => {
                let flag = e
                    .gap
                    .ratio_undefined
                    .then(|| "undefined ratio: exact pre-treatment fit".to_string());
                if flag.is_none() {
                    ranked.push(e.gap.rmspe_ratio);
                } else {
                    warn!("placebo `{unit}`: pre-treatment RMSPE is zero, not ranked");
                }
                PlaceboRow {
                    unit,
                    raw_ratio: e.gap.rmspe_ratio,
                    rmspe_ratio: e.gap.rmspe_ratio / treated.rmspe_ratio,
                    att: e.gap.att,
                    pre_rmspe: e.gap.pre_rmspe,
                    p_value: f64::NAN,
                    lambda: e.fit.lambda,
                    gap: e.gap.gap.clone(),
                    flag,
                }
            }
            Err(err) => {
                warn!("placebo `{unit}` failed: {err}");
                PlaceboRow {
                    unit,
                    raw_ratio: f64::NAN,
                    rmspe_ratio: f64::NAN,
                    att: f64::NAN,
                    pre_rmspe: f64::NAN,
                    p_value: f64::NAN,
                    lambda: f64::NAN,
                    gap: Vec::new(),
                    flag: Some(format!("fit failed: {err}")),
                }
            }
        })
        .collect();
    let denominator = ranked.len();
    for r in &mut rows {
        if r.flag.is_none() {
            r.p_value = rank_of(r.raw_ratio, &ranked) as f64 / denominator as f64;
        }
    }
    rows.sort_by(|a, b| a.unit.cmp(&b.unit));
    let (treated_rank, p_value) = if treated.ratio_undefined {
        (0, f64::NAN)
    } else {
        let rank = rank_of(treated.rmspe_ratio, &ranked);
        (rank, rank as f64 / denominator as f64)
    };
    Ok(PlaceboTable {
        treated: baseline.treated.clone(),
        treated_ratio: treated.rmspe_ratio,
        treated_att: treated.att,
        treated_rank,
        denominator,
        p_value,
        rows,
    })
}

/// Result of moving the treatment into the pre-treatment period.
#[derive(Debug, Clone, PartialEq)]
pub struct InTimePlacebo {
    /// Last pre-treatment day under the fake date.
    pub fake_t0: usize,
    /// Last day of the sample (the true `T0`).
    pub true_t0: usize,
    /// Gaps over days `1..=true_t0`.
    pub gap: GapAnalysis,
    /// λ re-selected at the fake date.
    pub lambda: f64,
    /// λ of the baseline fit at the true date.
    pub baseline_lambda: f64,
    pub estimate: Estimate,
}

/// Refits with the treatment moved to day `fake_t0 + 1`, the sample ending at
/// the true `T0`, and the donor pool unchanged. Lag days beyond `fake_t0` are
/// dropped from `spec`.
pub fn in_time_placebo(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    fake_t0: usize,
) -> Result<InTimePlacebo> {
    if fake_t0 < 3 || fake_t0 >= panel.t0() {
        return Err(InferenceError::Insufficient(format!(
            "fake pre-treatment length {fake_t0} must lie in [3, {})",
            panel.t0()
        ))
        .into());
    }
    let baseline_lambda = estimate(panel, spec, config)?.fit.lambda;
    let fake = panel.with_fake_treatment(fake_t0)?;
    let est = estimate(&fake, &spec.clipped_to(fake_t0), config)?;
    Ok(InTimePlacebo {
        fake_t0,
        true_t0: panel.t0(),
        gap: est.gap.clone(),
        lambda: est.fit.lambda,
        baseline_lambda,
        estimate: est,
    })
}
