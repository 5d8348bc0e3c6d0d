//! Thin SVD that is safe on wide and rank-deficient inputs.
//!
//! nalgebra's bidiagonal SVD can return a factorization that does not
//! reconstruct a wide, rank-deficient matrix (seen on centered 4×9 donor
//! blocks). We always factor the tall orientation and check the result,
//! falling back to the eigen-decomposition of the Gram matrix.

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `m = u · diag(s) · v_t`, with `k = min(rows, cols)` singular values.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let tall = m.nrows() >= m.ncols();
        let a = if tall { m.clone() } else { m.transpose() };
        let f = tall_svd(&a);
        if tall {
            f
        } else {
            Self {
                u: f.v_t.transpose(),
                s: f.s,
                v_t: f.u.transpose(),
            }
        }
    }

    pub fn max_singular(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }

    /// Minimum-norm least-squares solution, singular values `≤ eps` dropped.
    pub fn solve(&self, b: &DVector<f64>, eps: f64) -> DVector<f64> {
        let z = (self.u.transpose() * b).zip_map(&self.s, |v, s| if s > eps { v / s } else { 0.0 });
        self.v_t.transpose() * z
    }

    fn residual(&self, m: &DMatrix<f64>) -> f64 {
        let mut r = m.clone();
        for k in 0..self.s.len() {
            r -= self.u.column(k) * self.v_t.row(k) * self.s[k];
        }
        r.amax()
    }
}

fn tall_svd(a: &DMatrix<f64>) -> ThinSvd {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * (a.nrows() + a.ncols()) as f64;
    if let Some(svd) = a.clone().try_svd(true, true, f64::EPSILON, 0) {
        let f = ThinSvd {
            u: svd.u.unwrap(),
            s: svd.singular_values,
            v_t: svd.v_t.unwrap(),
        };
        if f.residual(a) <= tol && f.u.iter().all(|v| v.is_finite()) {
            return f;
        }
    }
    debug!("svd of {}x{} failed its reconstruction check; using the Gram route", a.nrows(), a.ncols());
    gram_svd(a)
}

/// `AᵀA = V Λ Vᵀ`, `s = √λ`, `u = A v / s`. Directions below rounding level
/// get `s = 0` and a zero `u` column; every consumer filters them out.
fn gram_svd(a: &DMatrix<f64>) -> ThinSvd {
    let k = a.ncols();
    let eig = SymmetricEigen::new(a.transpose() * a);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut s = DVector::from_fn(k, |c, _| eig.eigenvalues[order[c]].max(0.0).sqrt());
    let v = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let cut = s.iter().copied().fold(0.0, f64::max) * 1e-7;
    let mut u = DMatrix::zeros(a.nrows(), k);
    for c in 0..k {
        if s[c] > cut {
            u.set_column(c, &((a * v.column(c)) / s[c]));
        } else {
            s[c] = 0.0;
        }
    }
    ThinSvd { u, s, v_t: v.transpose() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn reconstructs_wide_centered_blocks() {
        for seed in 0..2000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..8);
            let p = rng.random_range(1..14);
            let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let xc = super::super::center_columns(&x);
            for m in [x, xc] {
                let f = ThinSvd::new(&m);
                assert!(f.residual(&m) < 1e-11, "seed {seed}: {n}x{p}");
                let k = f.s.iter().filter(|&&v| v > 0.0).count();
                let u = f.u.columns(0, k);
                let gram = u.transpose() * u;
                assert!((gram - DMatrix::identity(k, k)).amax() < 1e-10, "seed {seed}: u not orthonormal");
            }
        }
    }

    #[test]
    fn solve_matches_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        let x = ThinSvd::new(&a).solve(&b, 1e-12);
        let normal = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &b));
        assert!((x - normal).amax() < 1e-12);
    }
}
