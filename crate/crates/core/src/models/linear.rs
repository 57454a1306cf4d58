use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_columns, check_training, ModelError};

/// Relative singular-value cutoff for rank detection. Looser than machine
/// precision so that columns which are collinear only up to serialization
/// rounding (topic proportions summing to 1) are still caught.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// The design matrix `[1 | X]` was numerically rank deficient and the
    /// minimum-norm least-squares solution was returned.
    pub rank_deficient: bool,
}

/// Least squares on the intercept-augmented design `[1 | X]`.
///
/// Full-rank designs are solved through a Householder QR factorization
/// (`R b = Qᵀ y`). When the smallest singular value falls below
/// `RANK_TOLERANCE · σ_max` the design is treated as rank deficient and the
/// minimum-norm solution is taken from the SVD instead.
pub fn fit_linear(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<LinearModel, ModelError> {
    check_training(x, y)?;
    let (n, f) = x.dim();
    let p = f + 1;
    let a = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let b = DVector::from_column_slice(y);

    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = if n >= p { svd.singular_values.min() } else { 0.0 };
    let tol = RANK_TOLERANCE * s_max;

    let (solution, rank_deficient) = if s_max > 0.0 && s_min > tol {
        let qr = a.qr();
        let qtb = qr.q().transpose() * &b;
        let sol = qr
            .r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| ModelError::InvalidParams("singular triangular factor".into()))?;
        (sol, false)
    } else {
        let sol = svd
            .solve(&b, tol)
            .map_err(|e| ModelError::InvalidParams(e.to_string()))?;
        (sol, true)
    };
    Ok(LinearModel {
        intercept: solution[0],
        coefficients: solution.iter().skip(1).copied().collect(),
        rank_deficient,
    })
}

pub fn predict_linear(model: &LinearModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ModelError> {
    check_columns(x, model.coefficients.len())?;
    Ok(x.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&model.coefficients)
                .fold(model.intercept, |acc, (v, c)| acc + v * c)
        })
        .collect())
}
