//! One full fit: predictor assembly, λ selection, weights, counterfactuals.

use log::{info, log_enabled, Level};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{gap_analysis, GapAnalysis};
use crate::panel::AlignedPanel;
use crate::solver::{
    counterfactual_series, cross_validate_folds, default_lambda_grid, fit_ridge_outcome,
    fit_weights, CvFold, CvResult, LambdaRule, ScmConfig, WeightFit,
};
use crate::specs::{build_keeping_averages, build_resolved, PredictorMatrices, ResolvedSpec};

/// How the ridge penalty is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    /// Leave-one-period-out CV; `grid: None` uses the scale-aware default.
    Cv {
        rule: LambdaRule,
        grid: Option<Vec<f64>>,
    },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub scm: ScmConfig,
    pub lambda: LambdaChoice,
    /// Standardize each predictor row across units before fitting.
    pub normalize: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            scm: ScmConfig::default(),
            lambda: LambdaChoice::Cv {
                rule: LambdaRule::OneSe,
                grid: None,
            },
            normalize: false,
        }
    }
}

/// Everything produced by one fit of one specification.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub spec: ResolvedSpec,
    pub treated: String,
    pub donors: Vec<String>,
    pub t0: usize,
    pub t_end: usize,
    pub matrices: PredictorMatrices,
    pub fit: WeightFit,
    pub cv: Option<CvResult>,
    /// Days `1..=T_end`.
    pub actual: Vec<f64>,
    pub synthetic_scm: Vec<f64>,
    pub synthetic_aug: Vec<f64>,
    /// Gaps against the augmented counterfactual.
    pub gap: GapAnalysis,
    pub gap_scm: GapAnalysis,
}

impl Estimate {
    /// Held-out pre-treatment errors at the chosen λ, when CV ran.
    pub fn holdout_errors(&self) -> Option<&[f64]> {
        self.cv.as_ref().map(|c| c.selected_errors())
    }
}

fn folds(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    normalize: bool,
    keep_averages: bool,
) -> Result<Vec<CvFold>> {
    let treated = panel.treated_view();
    let donors = panel.donor_views();
    (1..=panel.t0())
        .map(|t| {
            let m = if keep_averages {
                build_keeping_averages(panel, spec, t, normalize)?
            } else {
                build_resolved(panel, spec, Some(t), normalize)?
            };
            Ok(CvFold {
                x1: m.x1,
                x0: m.x0,
                y1: treated.outcome[t - 1],
                y0: DVector::from_iterator(donors.len(), donors.iter().map(|d| d.outcome[t - 1])),
            })
        })
        .collect()
}

/// Cross-validates λ for `spec` on `panel`.
pub fn select_lambda(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    config: &EstimatorConfig,
    rule: LambdaRule,
    grid: &[f64],
) -> Result<CvResult> {
    let cv = cross_validate_folds(&folds(panel, spec, config.normalize, false)?, grid, rule, &config.scm)?;
    if spec.dynamic_covariates && log_enabled!(Level::Info) {
        let alt = folds(panel, spec, config.normalize, true)
            .and_then(|f| Ok(cross_validate_folds(&f, grid, rule, &config.scm)?));
        if let Ok(alt) = alt {
            let gap = cv
                .cv_mse
                .iter()
                .zip(&alt.cv_mse)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
                .fold(0.0, f64::max);
            if gap > 1e-3 {
                info!(
                    "spec {}: CV curve with held-out day kept in covariate averages differs by up to {:.2}% (lambda {} vs {})",
                    spec.id,
                    100.0 * gap,
                    cv.selected(),
                    alt.selected()
                );
            }
        }
    }
    Ok(cv)
}

/// Fits `spec` on `panel` end to end.
pub fn estimate(panel: &AlignedPanel, spec: &ResolvedSpec, config: &EstimatorConfig) -> Result<Estimate> {
    let matrices = build_resolved(panel, spec, None, config.normalize)?;
    let (lambda, cv) = match &config.lambda {
        LambdaChoice::Fixed(l) => (*l, None),
        LambdaChoice::Cv { rule, grid } => {
            let grid = grid.clone().unwrap_or_else(|| default_lambda_grid(&matrices.x0));
            let cv = select_lambda(panel, spec, config, *rule, &grid)?;
            (cv.selected(), Some(cv))
        }
    };
    let mut fit = fit_weights(&matrices.x1, &matrices.x0, &config.scm, lambda)?;

    let t0 = panel.t0();
    let t_end = panel.t_end();
    let treated = panel.treated_view();
    let donors = panel.donor_views();
    let outcomes: Vec<&[f64]> = donors.iter().map(|d| d.outcome).collect();

    // ridge model of the mean post-treatment donor outcome, for reporting
    let post_mean = DVector::from_iterator(
        donors.len(),
        donors
            .iter()
            .map(|d| d.outcome[t0..].iter().sum::<f64>() / (t_end - t0) as f64),
    );
    fit.ridge_coefficients =
        fit_ridge_outcome(&post_mean, &crate::solver::center_columns(&matrices.x0), lambda).ok();

    let synthetic_scm = counterfactual_series(&fit.gamma_scm, &outcomes, 1..=t_end)?;
    let synthetic_aug = counterfactual_series(&fit.gamma_aug, &outcomes, 1..=t_end)?;
    let actual = treated.outcome.to_vec();
    let gap = gap_analysis(&actual, &synthetic_aug, t0)?;
    let gap_scm = gap_analysis(&actual, &synthetic_scm, t0)?;
    info!(
        "spec {} treated {}: lambda {lambda:.4e}, ATT {:.4}, pre-RMSPE {:.4}",
        spec.id,
        treated.id,
        gap.att,
        gap.pre_rmspe
    );
    Ok(Estimate {
        spec: spec.clone(),
        treated: treated.id.to_string(),
        donors: matrices.donors.clone(),
        t0,
        t_end,
        matrices,
        fit,
        cv,
        actual,
        synthetic_scm,
        synthetic_aug,
        gap,
        gap_scm,
    })
}
