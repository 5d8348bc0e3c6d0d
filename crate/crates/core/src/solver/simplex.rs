//! Simplex-constrained least squares by Wolfe's minimum-norm-point method, a
//! fully corrective conditional-gradient scheme: every major step adds the
//! best vertex and re-optimizes exactly over the affine hull of the active
//! set, so sparse vertex solutions come out exact.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::ThinSvd;
use crate::error::SolverError;

/// Penalty `f(γᵢ)` attached to the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    #[default]
    None,
    /// `ζ Σ γᵢ²`.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub zeta: f64,
    pub dispersion: Dispersion,
    pub max_iterations: usize,
    /// Stop when the Frank–Wolfe gap falls below this multiple of the
    /// largest squared donor distance.
    pub objective_tolerance: f64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self {
            zeta: 0.0,
            dispersion: Dispersion::None,
            max_iterations: 10_000,
            objective_tolerance: 1e-15,
        }
    }
}

impl ScmConfig {
    fn penalized(&self) -> bool {
        self.zeta > 0.0 && self.dispersion == Dispersion::Squared
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmFit {
    pub gamma: DVector<f64>,
    /// `‖X1 − X0ᵀγ‖² + ζ Σ f(γᵢ)`.
    pub objective: f64,
    pub iterations: usize,
}

/// Minimizes `‖x1 − X0ᵀγ‖² + ζ Σ f(γᵢ)` over the unit simplex. `x0` holds one
/// row per donor.
pub fn fit_scm(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    config: &ScmConfig,
) -> Result<ScmFit, SolverError> {
    let n = x0.nrows();
    let p = x0.ncols();
    if n < 2 {
        return Err(SolverError::TooFewDonors {
            found: n,
            required: 2,
        });
    }
    if x1.len() != p {
        return Err(SolverError::Dimension(format!(
            "treated has {} predictors, donors have {p}",
            x1.len()
        )));
    }
    if x1.iter().chain(x0.iter()).any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("predictor matrix".into()));
    }
    if !(config.zeta >= 0.0 && config.zeta.is_finite()) {
        return Err(SolverError::NonFinite(format!("zeta = {}", config.zeta)));
    }

    // Donor j becomes the point q_j = x0_j − x1 (augmented with √ζ e_j under
    // the squared penalty); the objective is ‖Σ γ_j q_j‖².
    let penalized = config.penalized();
    let m = if penalized { p + n } else { p };
    let root = config.zeta.sqrt();
    let points = DMatrix::from_fn(m, n, |r, j| {
        if r < p {
            x0[(j, r)] - x1[r]
        } else if r - p == j {
            root
        } else {
            0.0
        }
    });

    let (lambda, iterations) = min_norm_point(&points, config)?;
    let mut gamma = DVector::zeros(n);
    for (j, w) in lambda {
        gamma[j] = w;
    }
    if !penalized {
        if let Some(g) = least_dispersion(&points, &gamma) {
            gamma = g;
        }
    }
    let objective = objective(&points, &gamma);
    Ok(ScmFit {
        gamma,
        objective,
        iterations,
    })
}

fn objective(points: &DMatrix<f64>, gamma: &DVector<f64>) -> f64 {
    (points * gamma).norm_squared()
}

/// Coefficients `α` (summing to one) of the point of minimum norm in the
/// affine hull of the given columns.
fn affine_minimizer(points: &DMatrix<f64>, set: &[usize]) -> DVector<f64> {
    let k = set.len();
    if k == 1 {
        return DVector::from_element(1, 1.0);
    }
    let base = points.column(set[0]);
    let dirs = DMatrix::from_fn(points.nrows(), k - 1, |r, c| {
        points[(r, set[c + 1])] - base[r]
    });
    let svd = ThinSvd::new(&dirs);
    let eps = svd.max_singular() * 1e-13 * (points.nrows().max(k) as f64);
    let beta = svd.solve(&(-base.clone_owned()), eps);
    let mut alpha = DVector::zeros(k);
    alpha[0] = 1.0 - beta.sum();
    alpha.rows_mut(1, k - 1).copy_from(&beta);
    alpha
}

fn min_norm_point(
    points: &DMatrix<f64>,
    config: &ScmConfig,
) -> Result<(Vec<(usize, f64)>, usize), SolverError> {
    let n = points.ncols();
    let norms: Vec<f64> = (0..n).map(|j| points.column(j).norm_squared()).collect();
    let scale = norms.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let start = (0..n)
        .min_by(|&a, &b| norms[a].total_cmp(&norms[b]))
        .unwrap();

    let mut set = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points.column(start).clone_owned();
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > config.max_iterations {
            return Err(SolverError::NotConverged {
                iterations: config.max_iterations,
                objective: x.norm_squared(),
            });
        }
        let xx = x.norm_squared();
        if xx <= scale * f64::EPSILON * f64::EPSILON {
            break;
        }
        let dots: Vec<f64> = (0..n).map(|j| points.column(j).dot(&x)).collect();
        let j = (0..n).min_by(|&a, &b| dots[a].total_cmp(&dots[b])).unwrap();
        if xx - dots[j] <= config.objective_tolerance * scale || set.contains(&j) {
            break;
        }
        set.push(j);
        lambda.push(0.0);

        // minor cycle: move toward the affine minimizer until it is interior
        loop {
            let alpha = affine_minimizer(points, &set);
            if alpha.iter().all(|&a| a > 0.0) {
                lambda = alpha.iter().copied().collect();
                break;
            }
            let mut theta = 1.0_f64;
            for (l, a) in lambda.iter().zip(alpha.iter()) {
                if *a <= 0.0 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(alpha.iter()) {
                *l += theta * (a - *l);
            }
            let mut k = 0;
            while k < set.len() {
                if lambda[k] <= 1e-15 {
                    set.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if set.len() == 1 {
                lambda = vec![1.0];
                break;
            }
        }
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        x = DVector::zeros(points.nrows());
        for (&j, &l) in set.iter().zip(&lambda) {
            x.axpy(l, &points.column(j), 1.0);
        }
    }
    debug!("simplex solver: {iterations} iterations, support {}", set.len());
    Ok((set.into_iter().zip(lambda).collect(), iterations))
}

/// Among weights with the same fitted point, the one with least `Σ γᵢ²`:
/// a primal active-set solve of `min ½‖γ‖²` s.t. `[Q; 1ᵀ] γ = [Qγ*; 1]`,
/// `γ ≥ 0`, warm-started at `γ*`. Returns `None` when no strict improvement
/// is found.
fn least_dispersion(points: &DMatrix<f64>, gamma0: &DVector<f64>) -> Option<DVector<f64>> {
    let n = points.ncols();
    let m = points.nrows();
    let a = DMatrix::from_fn(m + 1, n, |r, j| if r < m { points[(r, j)] } else { 1.0 });
    let b = &a * gamma0;
    let base_obj = objective(points, gamma0);
    let base_norm = gamma0.norm_squared();

    let mut gamma = gamma0.clone();
    let mut free: Vec<bool> = gamma.iter().map(|&g| g > 0.0).collect();
    for _ in 0..(4 * n + 20) {
        let idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
        let af = DMatrix::from_fn(m + 1, idx.len(), |r, c| a[(r, idx[c])]);
        let svd = ThinSvd::new(&af);
        let tol = svd.max_singular() * 1e-12 * ((m + 1).max(idx.len()) as f64);
        let target = svd.solve(&b, tol);
        let step: Vec<f64> = idx.iter().zip(target.iter()).map(|(&j, t)| t - gamma[j]).collect();
        let moved = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        if moved <= 1e-14 {
            // multipliers of the bound constraints: μ_j = −a_jᵀν with A_Fᵀν = γ_F
            let gf = DVector::from_fn(idx.len(), |c, _| gamma[idx[c]]);
            let nu = ThinSvd::new(&af.transpose()).solve(&gf, tol);
            let worst = (0..n)
                .filter(|&j| !free[j])
                .map(|j| (j, -a.column(j).dot(&nu)))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match worst {
                Some((j, mu)) if mu < -1e-12 * (1.0 + nu.amax()) => free[j] = true,
                _ => break,
            }
            continue;
        }
        let mut alpha = 1.0_f64;
        let mut block = None;
        for (c, &j) in idx.iter().enumerate() {
            if step[c] < 0.0 {
                let r = -gamma[j] / step[c];
                if r < alpha {
                    alpha = r;
                    block = Some(j);
                }
            }
        }
        for (c, &j) in idx.iter().enumerate() {
            gamma[j] = (gamma[j] + alpha * step[c]).max(0.0);
        }
        if let Some(j) = block {
            gamma[j] = 0.0;
            free[j] = false;
        }
    }
    // rounding-level weights on donors the solve pushed to zero
    let top = gamma.amax();
    gamma.iter_mut().filter(|g| **g <= 1e-13 * top).for_each(|g| *g = 0.0);
    let total = gamma.sum();
    if !(total > 0.0) {
        return None;
    }
    gamma /= total;
    let obj = objective(points, &gamma);
    let improves = gamma.norm_squared() < base_norm * (1.0 - 1e-12);
    let scale = (0..n).map(|j| points.column(j).norm_squared()).fold(0.0, f64::max);
    // allow only rounding-level drift in the fit
    let keeps_fit = obj <= base_obj + 1e-12 * (base_obj * scale).sqrt() + 1e-24 * scale;
    (improves && keeps_fit).then_some(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x0(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, k| rows[i][k])
    }

    #[test]
    fn vertex_solution_is_exact() {
        let x0 = x0(&[&[1.0, 2.0, 3.0], &[4.0, 0.0, 1.0], &[-1.0, 5.0, 2.0]]);
        let x1 = DVector::from_vec(vec![4.0, 0.0, 1.0]);
        let fit = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        assert_eq!(fit.gamma.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn interior_midpoint() {
        let x0 = x0(&[&[0.0, 0.0, 1.0], &[2.0, 2.0, 3.0], &[5.0, -3.0, 0.0], &[-4.0, 6.0, 2.0]]);
        let x1 = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        let fit = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        let expected = [0.5, 0.5, 0.0, 0.0];
        for (g, e) in fit.gamma.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(fit.objective < 1e-24);
    }

    #[test]
    fn duplicate_donors_split_evenly() {
        // two identical donors: every split fits equally well, the even one
        // has least dispersion
        let x0 = x0(&[&[1.0, 1.0], &[1.0, 1.0], &[5.0, 9.0]]);
        let x1 = DVector::from_vec(vec![1.0, 1.0]);
        let fit = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        assert!((fit.gamma[0] - 0.5).abs() < 1e-12);
        assert!((fit.gamma[1] - 0.5).abs() < 1e-12);
        assert_eq!(fit.gamma[2], 0.0);
    }

    #[test]
    fn underdetermined_fit_prefers_least_dispersion() {
        // one predictor, target 0.5 reachable by many mixtures
        let x0 = x0(&[&[0.0], &[1.0], &[0.5], &[0.25]]);
        let x1 = DVector::from_vec(vec![0.5]);
        let fit = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        assert!(fit.objective < 1e-24);
        // minimum-norm point of {Σγ = 1, Σγx = 0.5}: γ = 1/5 + (4/35) x, interior
        for (g, x) in fit.gamma.iter().zip([0.0, 1.0, 0.5, 0.25]) {
            assert!((g - (0.2 + 4.0 / 35.0 * x)).abs() < 1e-10);
        }
        assert!((fit.gamma.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squared_penalty_spreads_weight() {
        let x0 = x0(&[&[1.0, 0.0], &[0.0, 1.0], &[0.9, 0.1]]);
        let x1 = DVector::from_vec(vec![1.0, 0.0]);
        let plain = fit_scm(&x1, &x0, &ScmConfig::default()).unwrap();
        assert_eq!(plain.gamma[0], 1.0);
        let cfg = ScmConfig {
            zeta: 0.5,
            dispersion: Dispersion::Squared,
            ..Default::default()
        };
        let pen = fit_scm(&x1, &x0, &cfg).unwrap();
        assert!(pen.gamma[0] < 1.0 && pen.gamma[2] > 0.0);
        let fit_part = (x1 - x0.transpose() * &pen.gamma).norm_squared();
        assert!((pen.objective - fit_part - 0.5 * pen.gamma.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let one = DMatrix::from_element(1, 2, 1.0);
        let x1 = DVector::from_element(2, 0.0);
        assert!(matches!(
            fit_scm(&x1, &one, &ScmConfig::default()),
            Err(SolverError::TooFewDonors { .. })
        ));
        let mut two = DMatrix::from_element(2, 2, 1.0);
        two[(0, 1)] = f64::NAN;
        assert!(matches!(
            fit_scm(&x1, &two, &ScmConfig::default()),
            Err(SolverError::NonFinite(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_objective() {
        let x0 = x0(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]);
        let x1 = DVector::from_vec(vec![5.0, 5.0]);
        let cfg = ScmConfig {
            max_iterations: 1,
            ..Default::default()
        };
        match fit_scm(&x1, &x0, &cfg) {
            Err(SolverError::NotConverged { iterations, objective }) => {
                assert_eq!(iterations, 1);
                assert!(objective > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
