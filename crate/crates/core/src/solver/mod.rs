//! Weight estimation: simplex-constrained synthetic control weights, the
//! centered ridge outcome model, augmented weights, and cross-validated
//! selection of the ridge penalty.

mod cv;
mod linalg;
mod ridge;
mod simplex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use cv::{cross_validate_folds, cross_validate_lambda, default_lambda_grid, CvFold, CvResult, LambdaRule};
pub use ridge::{augment_weights, center_columns, fit_ridge_outcome, RidgeFit};
pub use simplex::{fit_scm, Dispersion, ScmConfig, ScmFit};

use crate::error::SolverError;
use ridge::{augment_with, check_augment_inputs, RidgeBasis};

/// SCM and augmented weights for one fitted problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub gamma_scm: Vec<f64>,
    pub gamma_aug: Vec<f64>,
    pub lambda: f64,
    /// `X1 − X0ᵀγ_scm` in fitted predictor units.
    pub imbalance: Vec<f64>,
    /// Root mean squared predictor imbalance under each weight vector.
    pub pre_rmspe_scm: f64,
    pub pre_rmspe_aug: f64,
    pub scm_objective: f64,
    pub iterations: usize,
    /// Ridge model of the mean post-treatment donor outcome, when available.
    pub ridge_coefficients: Option<RidgeFit>,
}

fn rms(v: &DVector<f64>) -> f64 {
    (v.norm_squared() / v.len().max(1) as f64).sqrt()
}

/// Fits SCM weights and augments them with penalty `lambda`.
pub fn fit_weights(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    config: &ScmConfig,
    lambda: f64,
) -> Result<WeightFit, SolverError> {
    let scm = fit_scm(x1, x0, config)?;
    check_augment_inputs(&scm.gamma, x1, x0)?;
    let basis = RidgeBasis::new(&center_columns(x0));
    let aug = augment_with(&basis, &scm.gamma, x1, x0, lambda)?;
    let imbalance = x1 - x0.transpose() * &scm.gamma;
    let aug_imbalance = x1 - x0.transpose() * &aug;
    Ok(WeightFit {
        gamma_scm: scm.gamma.iter().copied().collect(),
        gamma_aug: aug.iter().copied().collect(),
        lambda,
        pre_rmspe_scm: rms(&imbalance),
        pre_rmspe_aug: rms(&aug_imbalance),
        imbalance: imbalance.iter().copied().collect(),
        scm_objective: scm.objective,
        iterations: scm.iterations,
        ridge_coefficients: None,
    })
}

/// Weighted donor outcomes `Σ γᵢ Yᵢt` for days `window` (1-based, inclusive).
pub fn counterfactual_series(
    weights: &[f64],
    donor_outcomes: &[&[f64]],
    window: std::ops::RangeInclusive<usize>,
) -> Result<Vec<f64>, SolverError> {
    if weights.len() != donor_outcomes.len() {
        return Err(SolverError::Dimension(format!(
            "{} weights for {} donors",
            weights.len(),
            donor_outcomes.len()
        )));
    }
    let len = donor_outcomes.iter().map(|s| s.len()).min().unwrap_or(0);
    let (start, end) = (*window.start(), *window.end());
    if start == 0 || end > len || start > end {
        return Err(SolverError::Window { start, end, len });
    }
    Ok((start..=end)
        .map(|d| {
            weights
                .iter()
                .zip(donor_outcomes)
                .map(|(w, y)| w * y[d - 1])
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterfactual_identity_and_average() {
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 6.0, 9.0];
        let donors: [&[f64]; 2] = [&a, &b];
        assert_eq!(counterfactual_series(&[0.0, 1.0], &donors, 1..=3).unwrap(), b);
        assert_eq!(
            counterfactual_series(&[0.5, 0.5], &donors, 2..=3).unwrap(),
            [4.0, 6.0]
        );
        assert!(matches!(
            counterfactual_series(&[0.5, 0.5], &donors, 1..=4),
            Err(SolverError::Window { .. })
        ));
    }

    #[test]
    fn aug_fit_never_worse_than_scm() {
        let x0 = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let x1 = DVector::from_vec(vec![1.0, 1.0]);
        let fit = fit_weights(&x1, &x0, &ScmConfig::default(), 0.1).unwrap();
        assert!(fit.pre_rmspe_aug <= fit.pre_rmspe_scm + 1e-10);
        assert!((fit.gamma_aug.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
