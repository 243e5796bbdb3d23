//! Closed-form ridge regression on centered data.
//!
//! With centered inputs `Xc` and targets `yc`, the weights are
//! `(XcᵀXc + λI)⁻¹ Xcᵀ yc`, or equivalently `Xcᵀ (XcXcᵀ + λI)⁻¹ yc`; the
//! smaller of the two systems is solved. The intercept is `ȳ − x̄·w`, so it
//! is never penalized. At λ = 0 the minimum-norm least-squares solution is
//! taken through an SVD.

use nalgebra::{DMatrix, DVector};

use super::{check_matrix, dot, Parameters, TrainedRegressor};
use crate::error::{Error, Result};
use crate::types::Feature;

const SVD_EPS: f64 = 1e-12;

pub fn train_ridge<R: AsRef<[f64]>>(
    xs: &[R],
    ys: &[f64],
    lambda: f64,
    target: Feature,
    seed: u64,
) -> Result<TrainedRegressor> {
    let p = check_matrix(xs, ys)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("{lambda} is not a finite value >= 0")));
    }
    let n = xs.len();
    let nf = n as f64;

    let mut x_mean = vec![0.0; p];
    for x in xs {
        for (m, v) in x_mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= nf);
    let y_mean = ys.iter().sum::<f64>() / nf;

    let xc = DMatrix::from_fn(n, p, |i, j| xs[i].as_ref()[j] - x_mean[j]);
    let yc = DVector::from_iterator(n, ys.iter().map(|y| y - y_mean));

    let w = if p == 0 {
        DVector::zeros(0)
    } else if lambda == 0.0 {
        xc.svd(true, true).solve(&yc, SVD_EPS).map_err(|e| Error::invalid("ridge", e))?
    } else if p <= n {
        let gram = xc.tr_mul(&xc) + DMatrix::identity(p, p) * lambda;
        solve_spd(gram, xc.tr_mul(&yc))?
    } else {
        let gram = &xc * xc.transpose() + DMatrix::identity(n, n) * lambda;
        let alpha = solve_spd(gram, yc)?;
        xc.tr_mul(&alpha)
    };

    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - dot(&x_mean, &weights);
    TrainedRegressor::new(target, seed, Some(p), Parameters::Ridge { weights, intercept, lambda })
        .with_train_rmse(xs, ys)
}

/// Solves a symmetric positive-(semi)definite system, falling back to a
/// pseudo-inverse when Cholesky fails on a numerically singular matrix.
fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    match a.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&b)),
        None => a.svd(true, true).solve(&b, SVD_EPS).map_err(|e| Error::invalid("ridge", e)),
    }
}
