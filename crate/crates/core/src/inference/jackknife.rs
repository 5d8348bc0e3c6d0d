//! Leave-one-donor-out refits and the jackknife+ band built on them.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GapAnalysis;
use crate::error::{Error, InferenceError, Result};
use crate::estimate::{estimate, select_lambda, Estimate, EstimatorConfig};
use crate::panel::AlignedPanel;
use crate::solver::LambdaRule;
use crate::specs::ResolvedSpec;

/// Weight magnitude below which a donor counts as unused.
pub const ZERO_WEIGHT: f64 = 1e-12;

/// One donor left out of the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct DonorRefit {
    pub donor: String,
    pub estimate: Result<Estimate>,
}

/// Refits with each listed donor removed from the pool, in donor order.
pub fn refit_without_each(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    donors: &[String],
) -> Vec<DonorRefit> {
    donors
        .par_iter()
        .map(|d| DonorRefit {
            donor: d.clone(),
            estimate: panel
                .without_donor(d)
                .map_err(Error::from)
                .and_then(|p| estimate(&p, spec, config)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooEntry {
    pub donor: String,
    pub gamma_scm: f64,
    pub gamma_aug: f64,
    /// False when the donor carries no weight and the baseline is reused.
    pub refit: bool,
    pub gap: Option<GapAnalysis>,
    pub lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub baseline_att: f64,
    /// One entry per donor, sorted by donor id.
    pub entries: Vec<LooEntry>,
    /// Mean ATT over successful refits.
    pub mean_att: f64,
    /// Pointwise mean gap over successful refits.
    pub mean_gap: Vec<f64>,
    pub refits: usize,
}

/// Leave-one-out over donors: every donor with non-zero SCM or augmented
/// weight is dropped in turn and the full pipeline re-run. Donors without
/// weight leave the fit unchanged, so their entry repeats the baseline.
pub fn leave_one_out_donors(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    baseline: &Estimate,
) -> Result<LooReport> {
    if panel.n_donors() < 3 {
        return Err(InferenceError::Insufficient(format!(
            "leave-one-out needs at least 3 donors, found {}",
            panel.n_donors()
        ))
        .into());
    }
    let weighted: Vec<String> = baseline
        .donors
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            baseline.fit.gamma_scm[i].abs() + baseline.fit.gamma_aug[i].abs() >= ZERO_WEIGHT
        })
        .map(|(_, d)| d.clone())
        .collect();
    let refits = refit_without_each(panel, spec, config, &weighted);
    Ok(loo_report(baseline, &refits))
}

pub(crate) fn loo_report(baseline: &Estimate, refits: &[DonorRefit]) -> LooReport {
    let mut entries = Vec::new();
    let mut sum_gap = vec![0.0; baseline.gap.gap.len()];
    let mut sum_att = 0.0;
    let mut n = 0usize;
    for (i, donor) in baseline.donors.iter().enumerate() {
        let (gs, ga) = (baseline.fit.gamma_scm[i], baseline.fit.gamma_aug[i]);
        let entry = match refits.iter().find(|r| &r.donor == donor) {
            None => LooEntry {
                donor: donor.clone(),
                gamma_scm: gs,
                gamma_aug: ga,
                refit: false,
                gap: Some(baseline.gap.clone()),
                lambda: Some(baseline.fit.lambda),
                error: None,
            },
            Some(DonorRefit {
                estimate: Ok(e), ..
            }) => {
                n += 1;
                sum_att += e.gap.att;
                for (s, g) in sum_gap.iter_mut().zip(&e.gap.gap) {
                    *s += g;
                }
                LooEntry {
                    donor: donor.clone(),
                    gamma_scm: gs,
                    gamma_aug: ga,
                    refit: true,
                    gap: Some(e.gap.clone()),
                    lambda: Some(e.fit.lambda),
                    error: None,
                }
            }
            Some(DonorRefit {
                estimate: Err(err), ..
            }) => {
                warn!("leave-one-out without `{donor}` failed: {err}");
                LooEntry {
                    donor: donor.clone(),
                    gamma_scm: gs,
                    gamma_aug: ga,
                    refit: true,
                    gap: None,
                    lambda: None,
                    error: Some(err.to_string()),
                }
            }
        };
        entries.push(entry);
    }
    entries.sort_by(|a, b| a.donor.cmp(&b.donor));
    let denom = n.max(1) as f64;
    LooReport {
        baseline_att: baseline.gap.att,
        entries,
        mean_att: if n == 0 { f64::NAN } else { sum_att / denom },
        mean_gap: sum_gap.iter().map(|s| if n == 0 { f64::NAN } else { s / denom }).collect(),
        refits: n,
    }
}

/// Pointwise prediction band for the counterfactual and the implied band for
/// the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBand {
    pub alpha: f64,
    pub method: String,
    /// Full-pool augmented counterfactual, days `1..=T_end`.
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `actual − upper` and `actual − lower`.
    pub gap_lower: Vec<f64>,
    pub gap_upper: Vec<f64>,
    /// Number of (refit, held-out period) scores per day.
    pub n_scores: usize,
    pub refits: usize,
    /// Two-sided p-value of the ATT from the same scores.
    pub att_p_value: f64,
}

pub const JACKKNIFE_METHOD: &str = "jackknife+ over donors: for each donor j left out, the refit's \
held-out pre-treatment errors R_jt (leave-one-period-out at the refit's lambda) and its \
counterfactual mu_-j(day); lower = floor((alpha/2)(n+1))-th smallest of mu_-j(day) - |R_jt|, \
upper = ceil((1-alpha/2)(n+1))-th smallest of mu_-j(day) + |R_jt|, n = number of (j, t) pairs, \
order statistics clipped to [1, n]";

/// Held-out errors of a refit, computing them at the fitted λ when CV did
/// not run.
fn residuals(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    refit: &DonorRefit,
    e: &Estimate,
) -> Result<Vec<f64>> {
    if let Some(r) = e.holdout_errors() {
        return Ok(r.to_vec());
    }
    let reduced = panel.without_donor(&refit.donor)?;
    let cv = select_lambda(&reduced, spec, config, LambdaRule::Min, &[e.fit.lambda])?;
    Ok(cv.selected_errors().to_vec())
}

/// The jackknife+ band from precomputed leave-one-donor-out refits.
pub fn jackknife_band_from(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    baseline: &Estimate,
    refits: &[DonorRefit],
    alpha: f64,
) -> Result<IntervalBand> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(InferenceError::InvalidAlpha(alpha).into());
    }
    let mut scores: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for r in refits {
        let Ok(e) = &r.estimate else { continue };
        let res = match residuals(panel, spec, config, r, e) {
            Ok(v) => v,
            Err(err) => {
                warn!("jackknife+: residuals without `{}` failed: {err}", r.donor);
                continue;
            }
        };
        scores.push((e.synthetic_aug.clone(), res));
    }
    if scores.len() < 2 {
        return Err(InferenceError::Insufficient(format!(
            "jackknife+ needs at least 2 successful refits, found {}",
            scores.len()
        ))
        .into());
    }
    let n: usize = scores.iter().map(|(_, r)| r.len()).sum();
    let lo_k = (((alpha / 2.0) * (n as f64 + 1.0)).floor() as usize).clamp(1, n);
    let hi_k = (((1.0 - alpha / 2.0) * (n as f64 + 1.0)).ceil() as usize).clamp(1, n);

    let days = baseline.synthetic_aug.len();
    let mut lower = Vec::with_capacity(days);
    let mut upper = Vec::with_capacity(days);
    let mut lo_vals = Vec::with_capacity(n);
    let mut hi_vals = Vec::with_capacity(n);
    for d in 0..days {
        lo_vals.clear();
        hi_vals.clear();
        for (mu, res) in &scores {
            for r in res {
                lo_vals.push(mu[d] - r.abs());
                hi_vals.push(mu[d] + r.abs());
            }
        }
        lo_vals.sort_by(f64::total_cmp);
        hi_vals.sort_by(f64::total_cmp);
        lower.push(lo_vals[lo_k - 1]);
        upper.push(hi_vals[hi_k - 1]);
    }

    // ATT scores: mean post gap of each refit widened by each residual
    let t0 = baseline.t0;
    let post_actual = baseline.actual[t0..].iter().sum::<f64>() / (days - t0) as f64;
    let (mut below, mut above) = (0usize, 0usize);
    for (mu, res) in &scores {
        let att = post_actual - mu[t0..].iter().sum::<f64>() / (days - t0) as f64;
        for r in res {
            if att + r.abs() >= 0.0 {
                below += 1;
            }
            if att - r.abs() <= 0.0 {
                above += 1;
            }
        }
    }
    let p_neg = (1 + below) as f64 / (n + 1) as f64;
    let p_pos = (1 + above) as f64 / (n + 1) as f64;

    Ok(IntervalBand {
        alpha,
        method: JACKKNIFE_METHOD.to_string(),
        point: baseline.synthetic_aug.clone(),
        gap_lower: baseline.actual.iter().zip(&upper).map(|(a, u)| a - u).collect(),
        gap_upper: baseline.actual.iter().zip(&lower).map(|(a, l)| a - l).collect(),
        lower,
        upper,
        n_scores: n,
        refits: scores.len(),
        att_p_value: (2.0 * p_neg.min(p_pos)).min(1.0),
    })
}

/// Jackknife+ band for `spec`, refitting once per donor.
pub fn jackknife_plus_band(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    alpha: f64,
) -> Result<IntervalBand> {
    if panel.n_donors() < 3 {
        return Err(InferenceError::Insufficient(format!(
            "jackknife+ needs at least 3 donors, found {}",
            panel.n_donors()
        ))
        .into());
    }
    let baseline = estimate(panel, spec, config)?;
    let donors: Vec<String> = baseline.donors.clone();
    let refits = refit_without_each(panel, spec, config, &donors);
    jackknife_band_from(panel, spec, config, &baseline, &refits, alpha)
}
