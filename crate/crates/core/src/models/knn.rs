use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_columns, check_training, ModelError};

/// Lazy k-nearest-neighbors regressor over Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub train_x: Array2<f64>,
    pub train_y: Vec<f64>,
    pub metric: String,
}

pub fn fit_knn(x: ArrayView2<'_, f64>, y: &[f64], k: usize) -> Result<KnnModel, ModelError> {
    check_training(x, y)?;
    if k == 0 || k > x.nrows() {
        return Err(ModelError::KTooLarge { k, rows: x.nrows() });
    }
    Ok(KnnModel {
        k,
        train_x: x.to_owned(),
        train_y: y.to_vec(),
        metric: "euclidean".to_string(),
    })
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Unweighted mean of the k nearest training targets. Neighbors are ranked
/// by squared Euclidean distance (same order as Euclidean), ties by lower
/// training-row index, and summed in rank order.
pub fn predict_knn(model: &KnnModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ModelError> {
    check_columns(x, model.train_x.ncols())?;
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    let k = model.k;
    Ok(x.rows()
        .into_iter()
        .map(|q| {
            let mut d: Vec<(f64, usize)> = model
                .train_x
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, r)| (squared_distance(q, r), i))
                .collect();
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, by_rank);
                d.truncate(k);
            }
            d.sort_unstable_by(by_rank);
            d.iter().map(|&(_, i)| model.train_y[i]).sum::<f64>() / k as f64
        })
        .collect())
}
