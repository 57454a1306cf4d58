//! Regressors: least squares, k-nearest neighbors, and gradient boosting over
//! oblivious trees.

mod boost;
mod knn;
mod linear;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boost::{fit_boosted, predict_boosted, BoostParams, BoostedEnsemble, ObliviousTree, Split};
pub use knn::{fit_knn, predict_knn, KnnModel};
pub use linear::{fit_linear, predict_linear, LinearModel, RANK_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("expected {expected} feature columns, found {found}")]
    ColumnCountMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("need at least {needed} training rows, have {rows}")]
    TooFewRows { needed: usize, rows: usize },
    #[error("k = {k} is invalid for {rows} training rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn check_training(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<(), ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::LengthMismatch {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    Ok(())
}

fn check_columns(x: ArrayView2<'_, f64>, expected: usize) -> Result<(), ModelError> {
    if x.ncols() != expected {
        return Err(ModelError::ColumnCountMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Linear,
    Knn,
    Boosted,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear_regression",
            ModelFamily::Knn => "knn",
            ModelFamily::Boosted => "boosted_trees",
        }
    }
}

/// A model kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    Knn { k: usize },
    Boosted(BoostParams),
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Linear => ModelFamily::Linear,
            ModelSpec::Knn { .. } => ModelFamily::Knn,
            ModelSpec::Boosted(_) => ModelFamily::Boosted,
        }
    }

    /// Hyperparameters as a JSON object (empty for least squares).
    pub fn params_json(&self) -> serde_json::Value {
        match self {
            ModelSpec::Linear => serde_json::json!({}),
            ModelSpec::Knn { k } => serde_json::json!({ "k": k }),
            ModelSpec::Boosted(p) => serde_json::json!({
                "learning_rate": p.learning_rate,
                "depth": p.depth,
                "l2_leaf_reg": p.l2_leaf_reg,
                "num_iterations": p.num_iterations,
                "min_samples_leaf": p.min_samples_leaf,
            }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Linear => "Linear Regression".to_string(),
            ModelSpec::Knn { k } => format!("KNN (k = {k})"),
            ModelSpec::Boosted(p) => format!(
                "Boosted trees (depth = {}, l2_leaf_reg = {}, learning_rate = {})",
                p.depth, p.l2_leaf_reg, p.learning_rate
            ),
        }
    }

    pub fn fit(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<FittedModel, ModelError> {
        Ok(match self {
            ModelSpec::Linear => FittedModel::Linear(fit_linear(x, y)?),
            ModelSpec::Knn { k } => FittedModel::Knn(fit_knn(x, y, *k)?),
            ModelSpec::Boosted(p) => FittedModel::Boosted(fit_boosted(x, y, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Knn(KnnModel),
    Boosted(BoostedEnsemble),
}

impl FittedModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ModelError> {
        match self {
            FittedModel::Linear(m) => predict_linear(m, x),
            FittedModel::Knn(m) => predict_knn(m, x),
            FittedModel::Boosted(m) => predict_boosted(m, x),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            FittedModel::Linear(_) => ModelFamily::Linear,
            FittedModel::Knn(_) => ModelFamily::Knn,
            FittedModel::Boosted(_) => ModelFamily::Boosted,
        }
    }
}
