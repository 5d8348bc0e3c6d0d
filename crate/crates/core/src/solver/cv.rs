//! Leave-one-period-out cross-validation of the ridge penalty.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ridge::{augment_with, center_columns, RidgeBasis};
use super::simplex::{fit_scm, ScmConfig};
use crate::error::SolverError;

/// How λ is picked from the CV curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    Min,
    /// Largest λ whose CV error is within one standard error of the minimum.
    #[default]
    OneSe,
}

impl FromStr for LambdaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min" => Ok(Self::Min),
            "one-se" => Ok(Self::OneSe),
            _ => Err(format!("invalid lambda rule `{s}`; expected min or one-se")),
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Min => "min",
            Self::OneSe => "one-se",
        })
    }
}

/// One held-out pre-treatment period: predictors rebuilt without it, plus the
/// treated and donor outcomes to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct CvFold {
    pub x1: DVector<f64>,
    pub x0: DMatrix<f64>,
    pub y1: f64,
    pub y0: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    /// Mean squared held-out error per λ (NaN where a fold failed).
    pub cv_mse: Vec<f64>,
    /// `sd(e²) / √T0` at `lambda_min`, floored at rounding resolution.
    pub se_of_min: f64,
    pub lambda_min: f64,
    pub lambda_one_se: f64,
    pub rule: LambdaRule,
    /// Held-out errors `Y_1t − Ŷ_1t^(−t)`, one row per λ.
    pub fold_errors: Vec<Vec<f64>>,
}

impl CvResult {
    pub fn selected(&self) -> f64 {
        match self.rule {
            LambdaRule::Min => self.lambda_min,
            LambdaRule::OneSe => self.lambda_one_se,
        }
    }

    fn index_of(&self, lambda: f64) -> usize {
        self.lambda_grid.iter().position(|&l| l == lambda).unwrap()
    }

    /// Held-out errors at the selected λ.
    pub fn selected_errors(&self) -> &[f64] {
        &self.fold_errors[self.index_of(self.selected())]
    }
}

fn check_grid(grid: &[f64]) -> Result<(), SolverError> {
    if grid.is_empty() {
        return Err(SolverError::InvalidGrid("empty".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(SolverError::InvalidGrid("values must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SolverError::InvalidGrid("values must be strictly increasing".into()));
    }
    Ok(())
}

/// Thirty log-spaced values over `[1e-4, 1e4] · tr(XcᵀXc) / p`.
pub fn default_lambda_grid(x0: &DMatrix<f64>) -> Vec<f64> {
    let xc = center_columns(x0);
    let p = x0.ncols().max(1) as f64;
    let trace = xc.norm_squared() / p;
    let scale = if trace > 0.0 && trace.is_finite() {
        trace
    } else {
        1.0
    };
    (0..30)
        .map(|k| scale * 10f64.powf(-4.0 + 8.0 * k as f64 / 29.0))
        .collect()
}

/// Held-out errors of one fold for every λ in the grid.
fn fold_errors(
    fold: &CvFold,
    grid: &[f64],
    scm: &ScmConfig,
) -> Result<Vec<f64>, SolverError> {
    let gamma = fit_scm(&fold.x1, &fold.x0, scm)?.gamma;
    let basis = RidgeBasis::new(&center_columns(&fold.x0));
    grid.iter()
        .map(|&lambda| {
            let aug = augment_with(&basis, &gamma, &fold.x1, &fold.x0, lambda)?;
            Ok(fold.y1 - aug.dot(&fold.y0))
        })
        .collect()
}

/// Scores every λ on the given folds and applies `rule`.
pub fn cross_validate_folds(
    folds: &[CvFold],
    grid: &[f64],
    rule: LambdaRule,
    scm: &ScmConfig,
) -> Result<CvResult, SolverError> {
    check_grid(grid)?;
    if folds.len() < 3 {
        return Err(SolverError::TooFewPeriods(folds.len()));
    }
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|f| fold_errors(f, grid, scm))
        .collect::<Result<_, _>>()?;
    let fold_errors: Vec<Vec<f64>> = (0..grid.len())
        .map(|l| per_fold.iter().map(|e| e[l]).collect())
        .collect();
    // squared size of a rounding error in one held-out prediction
    let scale = folds
        .iter()
        .map(|f| f.y1.abs().max(f.y0.amax()))
        .fold(0.0, f64::max);
    let floor = (64.0 * f64::EPSILON * scale).powi(2);
    select(grid, fold_errors, rule, floor)
}

/// `floor` bounds the SE from below at the resolution of the squared errors,
/// so curves that are flat up to rounding count as flat.
fn select(
    grid: &[f64],
    fold_errors: Vec<Vec<f64>>,
    rule: LambdaRule,
    floor: f64,
) -> Result<CvResult, SolverError> {
    let t = fold_errors[0].len() as f64;
    let cv_mse: Vec<f64> = fold_errors
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum::<f64>() / t)
        .collect();
    let min_idx = (0..grid.len())
        .filter(|&l| cv_mse[l].is_finite())
        .min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b]))
        .ok_or(SolverError::NoFiniteCv)?;
    let sq: Vec<f64> = fold_errors[min_idx].iter().map(|v| v * v).collect();
    let mean = cv_mse[min_idx];
    let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (t - 1.0);
    let se_of_min = (var / t).sqrt().max(floor);
    let bound = cv_mse[min_idx] + se_of_min;
    let one_se_idx = (min_idx..grid.len())
        .filter(|&l| cv_mse[l] <= bound)
        .max()
        .unwrap_or(min_idx);
    Ok(CvResult {
        lambda_grid: grid.to_vec(),
        cv_mse,
        se_of_min,
        lambda_min: grid[min_idx],
        lambda_one_se: grid[one_se_idx],
        rule,
        fold_errors,
    })
}

/// Leave-one-period-out CV when the predictor rows are the pre-treatment
/// outcomes themselves: fold `t` drops row `t` and predicts it.
pub fn cross_validate_lambda(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    grid: &[f64],
    rule: LambdaRule,
) -> Result<CvResult, SolverError> {
    let t0 = x1.len();
    if x0.ncols() != t0 {
        return Err(SolverError::Dimension(format!(
            "{t0} treated periods, donors have {}",
            x0.ncols()
        )));
    }
    if t0 < 3 {
        return Err(SolverError::TooFewPeriods(t0));
    }
    let folds: Vec<CvFold> = (0..t0)
        .map(|t| {
            let keep: Vec<usize> = (0..t0).filter(|&s| s != t).collect();
            CvFold {
                x1: DVector::from_fn(keep.len(), |k, _| x1[keep[k]]),
                x0: DMatrix::from_fn(x0.nrows(), keep.len(), |i, k| x0[(i, keep[k])]),
                y1: x1[t],
                y0: x0.column(t).clone_owned(),
            }
        })
        .collect();
    cross_validate_folds(&folds, grid, rule, &ScmConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_grid() {
        let x1 = DVector::from_vec(vec![1.0, 2.0, 3.5, 5.0]);
        let x0 = DMatrix::from_row_slice(3, 4, &[0.5, 1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 6.0, 1.0, 1.5, 3.0, 4.0]);
        let cv = cross_validate_lambda(&x1, &x0, &[0.3], LambdaRule::OneSe).unwrap();
        assert_eq!(cv.lambda_min, 0.3);
        assert_eq!(cv.lambda_one_se, 0.3);
    }

    #[test]
    fn one_se_picks_largest_within_band() {
        let grid = [1.0, 2.0, 3.0, 4.0];
        let errors = vec![
            vec![1.0, 1.0, 1.0],
            vec![0.5, 0.6, 0.7],
            vec![0.55, 0.6, 0.7],
            vec![2.0, 2.0, 2.0],
        ];
        let cv = select(&grid, errors, LambdaRule::OneSe, 0.0).unwrap();
        assert_eq!(cv.lambda_min, 2.0);
        let sq = [0.25, 0.36, 0.49];
        let m = sq.iter().sum::<f64>() / 3.0;
        let var = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / 2.0;
        assert!((cv.se_of_min - (var / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(cv.lambda_one_se, 3.0);
        assert!(cv.cv_mse[2] <= cv.cv_mse[1] + cv.se_of_min);
    }

    #[test]
    fn rejects_bad_grids_and_short_panels() {
        let x1 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x0 = DMatrix::from_element(3, 3, 1.0);
        for g in [vec![], vec![0.0, 1.0], vec![2.0, 1.0]] {
            assert!(matches!(
                cross_validate_lambda(&x1, &x0, &g, LambdaRule::Min),
                Err(SolverError::InvalidGrid(_))
            ));
        }
        let x1 = DVector::from_vec(vec![1.0, 2.0]);
        let x0 = DMatrix::from_element(3, 2, 1.0);
        assert_eq!(
            cross_validate_lambda(&x1, &x0, &[1.0], LambdaRule::Min),
            Err(SolverError::TooFewPeriods(2))
        );
    }

    #[test]
    fn default_grid_scales_with_predictors() {
        let x0 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 4.0]);
        // centered rows ±(1, 2): trace 10, p 2
        let g = default_lambda_grid(&x0);
        assert_eq!(g.len(), 30);
        assert!((g[0] - 5e-4).abs() < 1e-15);
        assert!((g[29] - 5e4).abs() < 1e-8);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let flat = default_lambda_grid(&DMatrix::from_element(3, 2, 7.0));
        assert!((flat[0] - 1e-4).abs() < 1e-18);
    }
}
