//! Centered ridge outcome model and the implied augmented weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::ThinSvd;
use crate::error::SolverError;

/// `η0`, `η` of `Y ≈ η0 + Xᵀη`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub eta0: f64,
    pub eta: Vec<f64>,
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |k, _| x.column(k).sum() / x.nrows() as f64)
}

/// Subtracts the donor mean from every predictor column.
pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| x[(i, k)] - means[k])
}

/// Thin SVD of a centered donor matrix with the ridge filter `s / (s² + λ)`.
#[derive(Debug, Clone)]
pub(crate) struct RidgeBasis {
    svd: ThinSvd,
    rank: usize,
    p: usize,
}

impl RidgeBasis {
    pub(crate) fn new(xc: &DMatrix<f64>) -> Self {
        let svd = ThinSvd::new(xc);
        let smax = svd.max_singular();
        let tol = smax * f64::EPSILON * (xc.nrows().max(xc.ncols()) as f64);
        let rank = svd.s.iter().filter(|&&s| s > tol).count();
        Self {
            svd,
            rank,
            p: xc.ncols(),
        }
    }

    fn filter(&self, lambda: f64) -> Result<DVector<f64>, SolverError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SolverError::InvalidGrid(format!("lambda = {lambda}")));
        }
        if lambda == 0.0 && self.rank < self.p {
            return Err(SolverError::Singular);
        }
        Ok(self.svd.s.map(|s| {
            if lambda == 0.0 {
                if s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            } else {
                s / (s * s + lambda)
            }
        }))
    }

    /// `(XcᵀXc + λI)⁻¹ Xcᵀ y`.
    pub(crate) fn coefficients(
        &self,
        y: &DVector<f64>,
        lambda: f64,
    ) -> Result<DVector<f64>, SolverError> {
        let f = self.filter(lambda)?;
        let u = &self.svd.u;
        let vt = &self.svd.v_t;
        let z = (u.transpose() * y).component_mul(&f);
        Ok(vt.transpose() * z)
    }

    /// `Xc (XcᵀXc + λI)⁻¹ d`.
    pub(crate) fn correction(
        &self,
        d: &DVector<f64>,
        lambda: f64,
    ) -> Result<DVector<f64>, SolverError> {
        let f = self.filter(lambda)?;
        let u = &self.svd.u;
        let vt = &self.svd.v_t;
        let z = (vt * d).component_mul(&f);
        Ok(u * z)
    }
}

/// Ridge regression of donor outcomes `y0` on the column-centered donor
/// predictors, minimizing `½ Σ (yᵢ − η0 − xᵢᵀη)² + (λ/2) ‖η‖²`, i.e.
/// `η = (XcᵀXc + λI)⁻¹ Xcᵀ y`.
pub fn fit_ridge_outcome(
    y0: &DVector<f64>,
    x0_centered: &DMatrix<f64>,
    lambda: f64,
) -> Result<RidgeFit, SolverError> {
    if y0.len() != x0_centered.nrows() {
        return Err(SolverError::Dimension(format!(
            "{} outcomes for {} donors",
            y0.len(),
            x0_centered.nrows()
        )));
    }
    let eta = RidgeBasis::new(x0_centered).coefficients(y0, lambda)?;
    let means = column_means(x0_centered);
    Ok(RidgeFit {
        eta0: y0.mean() - means.dot(&eta),
        eta: eta.iter().copied().collect(),
    })
}

pub(crate) fn check_augment_inputs(
    gamma: &DVector<f64>,
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
) -> Result<(), SolverError> {
    if gamma.len() != x0.nrows() || x1.len() != x0.ncols() {
        return Err(SolverError::Dimension(format!(
            "{} weights, {} treated predictors, donor matrix {}x{}",
            gamma.len(),
            x1.len(),
            x0.nrows(),
            x0.ncols()
        )));
    }
    Ok(())
}

/// `γ + Xc (XcᵀXc + λI)⁻¹ (x1 − X0ᵀγ)` with `Xc` centered at the donor means.
/// The correction sums to zero, so the result sums to one whenever `γ` does.
pub fn augment_weights(
    gamma_scm: &DVector<f64>,
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    lambda: f64,
) -> Result<DVector<f64>, SolverError> {
    check_augment_inputs(gamma_scm, x1, x0)?;
    let basis = RidgeBasis::new(&center_columns(x0));
    augment_with(&basis, gamma_scm, x1, x0, lambda)
}

pub(crate) fn augment_with(
    basis: &RidgeBasis,
    gamma: &DVector<f64>,
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    lambda: f64,
) -> Result<DVector<f64>, SolverError> {
    let d = x1 - x0.transpose() * gamma;
    let correction = basis.correction(&d, lambda)?;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(gamma.clone());
    }
    Ok(gamma + correction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance() -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let x0 = DMatrix::from_row_slice(
            5,
            3,
            &[
                1.0, 2.0, 0.5, //
                -1.0, 0.3, 2.0, //
                0.7, -2.0, 1.0, //
                3.0, 1.0, -1.0, //
                0.0, 0.4, 0.2,
            ],
        );
        let x1 = DVector::from_vec(vec![4.0, 3.0, -2.0]);
        let g = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4, 0.0]);
        (x1, x0, g)
    }

    #[test]
    fn huge_lambda_collapses_to_mean() {
        let (_, x0, _) = instance();
        let y = DVector::from_vec(vec![1.0, 4.0, 2.0, 8.0, 5.0]);
        let fit = fit_ridge_outcome(&y, &center_columns(&x0), 1e12).unwrap();
        assert!(fit.eta.iter().all(|e| e.abs() < 1e-10));
        assert!((fit.eta0 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let (_, x0, _) = instance();
        let xc = center_columns(&x0);
        let y = DVector::from_vec(vec![1.0, 4.0, 2.0, 8.0, 5.0]);
        let fit = fit_ridge_outcome(&y, &xc, 0.0).unwrap();
        // least-squares residuals are orthogonal to the design
        let eta = DVector::from_vec(fit.eta.clone());
        let resid = &y - DVector::from_element(5, fit.eta0) - &xc * eta;
        assert!((xc.transpose() * resid).amax() < 1e-12);
    }

    #[test]
    fn zero_lambda_rank_deficient_is_singular() {
        let x0 = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(
            fit_ridge_outcome(&y, &center_columns(&x0), 0.0),
            Err(SolverError::Singular)
        );
        assert!(fit_ridge_outcome(&y, &center_columns(&x0), 0.1).is_ok());
    }

    #[test]
    fn augmented_weights_sum_to_one_and_shrink_imbalance() {
        let (x1, x0, g) = instance();
        for lambda in [1e-3, 0.1, 1.0, 10.0] {
            let aug = augment_weights(&g, &x1, &x0, lambda).unwrap();
            assert!((aug.sum() - 1.0).abs() < 1e-12);
            assert!(aug.iter().any(|&w| w < 0.0));
            let before = (&x1 - x0.transpose() * &g).norm();
            let after = (&x1 - x0.transpose() * &aug).norm();
            assert!(after <= before);
        }
        let aug = augment_weights(&g, &x1, &x0, 1e12).unwrap();
        assert!((aug - &g).amax() < 1e-6);
    }

    #[test]
    fn zero_imbalance_returns_identical_weights() {
        let (_, x0, g) = instance();
        let x1 = x0.transpose() * &g;
        let aug = augment_weights(&g, &x1, &x0, 0.5).unwrap();
        assert_eq!(aug, g);
    }
}
