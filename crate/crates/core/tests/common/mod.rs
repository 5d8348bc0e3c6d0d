#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `‖x1 − X0ᵀγ‖²` with donors as rows of `x0`.
pub fn objective(x1: &DVector<f64>, x0: &DMatrix<f64>, gamma: &[f64]) -> f64 {
    (0..x1.len())
        .map(|k| {
            let fit: f64 = gamma.iter().enumerate().map(|(i, g)| g * x0[(i, k)]).sum();
            (x1[k] - fit).powi(2)
        })
        .sum()
}

/// Exhaustive search over the simplex lattice with spacing `1 / steps`.
pub fn grid_search(x1: &DVector<f64>, x0: &DMatrix<f64>, steps: usize) -> (f64, Vec<f64>) {
    let n = x0.nrows();
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut counts = vec![0usize; n];
    fn walk(
        pos: usize,
        left: usize,
        steps: usize,
        counts: &mut Vec<usize>,
        x1: &DVector<f64>,
        x0: &DMatrix<f64>,
        best: &mut (f64, Vec<f64>),
    ) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            let g: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            let f = objective(x1, x0, &g);
            if f < best.0 {
                *best = (f, g);
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            walk(pos + 1, left - c, steps, counts, x1, x0, best);
        }
    }
    walk(0, steps, steps, &mut counts, x1, x0, &mut best);
    best
}

/// Standard-normal instance: `n` donors, `p` predictors.
pub fn random_instance(seed: u64, n: usize, p: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x0 = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    (x1, x0)
}

/// Normal-equations ridge solve `(XᵀX + λI)⁻¹ Xᵀy` via Cholesky, independent
/// of the crate's SVD route.
pub fn ridge_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let p = x.ncols();
    let a = x.transpose() * x + DMatrix::identity(p, p) * lambda;
    a.cholesky().expect("positive definite").solve(&(x.transpose() * y))
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut c = x.clone();
    for k in 0..x.ncols() {
        let m = x.column(k).sum() / n;
        c.column_mut(k).add_scalar_mut(-m);
    }
    c
}
