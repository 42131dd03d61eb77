//! Row-group sparsity: the ℓ2,1 norm and its proximal map.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) fn row_norm(x: &DMatrix<f64>, i: usize) -> f64 {
    x.row(i).norm()
}

/// Sum of the Euclidean norms of the rows of `x`.
pub fn l21_norm(x: &DMatrix<f64>) -> f64 {
    (0..x.nrows()).map(|i| row_norm(x, i)).sum()
}

/// Row-wise shrinkage `y_i = x_i / ‖x_i‖ · max(0, ‖x_i‖ − beta)`.
///
/// A `beta` of exactly zero is accepted and returns `x`; this is the form the
/// semi-smooth Newton solver uses when the sparsity weight is switched off.
pub(crate) fn shrink_rows(x: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let mut y = x.clone();
    if beta == 0.0 {
        return y;
    }
    for i in 0..x.nrows() {
        let norm = row_norm(x, i);
        let mut row = y.row_mut(i);
        if norm <= beta {
            row.fill(0.0);
        } else {
            row *= (norm - beta) / norm;
        }
    }
    y
}

/// Proximal operator of `beta · ‖·‖_{2,1}`.
pub fn prox_l21(x: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!("prox threshold must be positive, got {beta}")));
    }
    Ok(shrink_rows(x, beta))
}

/// Checks the first-order conditions of `min_y ‖y‖_{2,1} + ‖y − x‖² / (2 beta)`
/// at `y`, row by row, to 1e-8.
pub fn prox_optimality_check(x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> bool {
    const TOL: f64 = 1e-8;
    if x.shape() != y.shape() || !(beta > 0.0) {
        return false;
    }
    (0..x.nrows()).all(|i| {
        let yn = row_norm(y, i);
        if yn > 0.0 {
            let residual = y.row(i) * (1.0 + beta / yn) - x.row(i);
            residual.norm() <= TOL
        } else {
            row_norm(x, i) <= beta + TOL
        }
    })
}
