//! Fold plans, cross-validated RMSE, grid search and holdout evaluation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{apply_scaler, fit_range_scaler, FeatureError, FeatureTable, ScalerParams};
use crate::models::{BoostParams, FittedModel, ModelError, ModelFamily, ModelSpec};
use crate::rng::shuffled_indices;

/// Holdout RMSEs closer than this are treated as tied during final selection.
pub const SELECTION_TOLERANCE: f64 = 0.01;

pub const TRAINING_STD_DEFINITION: &str = "sample standard deviation (n-1) of the per-fold RMSEs";
pub const TEST_STD_DEFINITION: &str = "sample standard deviation (n-1) of the holdout residuals (truth - prediction)";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions, {truth} targets")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("fold count {k} out of range for {n} rows (need 2 <= k <= n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("fold plan covers {plan} rows but the table has {rows}")]
    PlanMismatch { plan: usize, rows: usize },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("grid is empty or has an empty axis")]
    EmptyGrid,
    #[error("unknown grid axis `{axis}` for {family}")]
    UnknownAxis { axis: String, family: &'static str },
    #[error("grid value {value} is not valid for axis `{axis}`")]
    InvalidAxisValue { axis: String, value: f64 },
    #[error("train and test sets share row {0}")]
    OverlappingSplit(usize),
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let ss: f64 = predictions.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / predictions.len() as f64).sqrt())
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Every row outside fold `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Seeded shuffle of `0..n` cut into `k` contiguous chunks; the first
/// `n mod k` folds hold one extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 || k > n {
        return Err(EvalError::KOutOfRange { k, n });
    }
    let order = shuffled_indices(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { n, k, seed, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub spec: ModelSpec,
    pub per_fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    #[serde(skip)]
    pub fold_scalers: Vec<ScalerParams>,
}

/// Scaler fitted on `rows` and applied to every row, plus the fitted model.
pub fn fit_on_rows(
    spec: &ModelSpec,
    table: &FeatureTable,
    rows: &[usize],
) -> Result<(FittedModel, ScalerParams), EvalError> {
    let scaler = fit_range_scaler(table.x.view(), rows)?;
    let x = apply_scaler(table.x.select(ndarray::Axis(0), rows).view(), &scaler)?;
    let y: Vec<f64> = rows.iter().map(|&r| table.y[r]).collect();
    let model = spec.fit(x.view(), &y)?;
    Ok((model, scaler))
}

fn predict_rows(
    model: &FittedModel,
    scaler: &ScalerParams,
    table: &FeatureTable,
    rows: &[usize],
) -> Result<Vec<f64>, EvalError> {
    let x = apply_scaler(table.x.select(ndarray::Axis(0), rows).view(), scaler)?;
    Ok(model.predict(x.view())?)
}

pub fn cross_validate(
    spec: &ModelSpec,
    table: &FeatureTable,
    plan: &FoldPlan,
) -> Result<CvResult, EvalError> {
    if plan.n != table.num_rows() {
        return Err(EvalError::PlanMismatch {
            plan: plan.n,
            rows: table.num_rows(),
        });
    }
    let per_fold: Vec<(f64, ScalerParams)> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let annotate = |e: EvalError| match e {
                EvalError::Model(source) => EvalError::Fold { fold, source },
                other => other,
            };
            let train = plan.train_indices(fold);
            let test = &plan.folds[fold];
            let (model, scaler) = fit_on_rows(spec, table, &train).map_err(annotate)?;
            let pred = predict_rows(&model, &scaler, table, test).map_err(annotate)?;
            let truth: Vec<f64> = test.iter().map(|&r| table.y[r]).collect();
            Ok((rmse(&pred, &truth)?, scaler))
        })
        .collect::<Result<_, EvalError>>()?;
    let (per_fold_rmse, fold_scalers): (Vec<f64>, Vec<ScalerParams>) = per_fold.into_iter().unzip();
    Ok(CvResult {
        spec: spec.clone(),
        mean_rmse: mean(&per_fold_rmse),
        std_rmse: sample_std(&per_fold_rmse),
        per_fold_rmse,
        fold_scalers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Named parameter axes; the first axis varies slowest. Parameters without an
/// axis take their value from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub base: BoostParams,
}

impl GridSpec {
    pub fn new(axes: Vec<(&str, Vec<f64>)>) -> Self {
        Self {
            axes: axes
                .into_iter()
                .map(|(name, values)| GridAxis {
                    name: name.to_string(),
                    values,
                })
                .collect(),
            base: BoostParams::default(),
        }
    }

    pub fn with_base(mut self, base: BoostParams) -> Self {
        self.base = base;
        self
    }

    /// Cartesian product of the axes in grid order.
    pub fn points(&self) -> Vec<Vec<(&str, f64)>> {
        let mut points: Vec<Vec<(&str, f64)>> = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.name.as_str(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// One model spec per grid point. The least-squares family has no
    /// hyperparameters and always expands to a single spec.
    pub fn expand(&self, family: ModelFamily) -> Result<Vec<ModelSpec>, EvalError> {
        if family == ModelFamily::Linear {
            return Ok(vec![ModelSpec::Linear]);
        }
        if self.axes.is_empty() || self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(EvalError::EmptyGrid);
        }
        let as_count = |axis: &str, v: f64| -> Result<usize, EvalError> {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(EvalError::InvalidAxisValue {
                    axis: axis.to_string(),
                    value: v,
                })
            }
        };
        self.points()
            .into_iter()
            .map(|point| match family {
                ModelFamily::Knn => {
                    let mut k = None;
                    for (axis, v) in point {
                        match axis {
                            "k" => k = Some(as_count(axis, v)?),
                            _ => {
                                return Err(EvalError::UnknownAxis {
                                    axis: axis.to_string(),
                                    family: family.name(),
                                })
                            }
                        }
                    }
                    Ok(ModelSpec::Knn { k: k.ok_or(EvalError::EmptyGrid)? })
                }
                ModelFamily::Boosted => {
                    let mut p = self.base.clone();
                    for (axis, v) in point {
                        match axis {
                            "learning_rate" => p.learning_rate = v,
                            "depth" => p.depth = as_count(axis, v)?,
                            "l2_leaf_reg" => p.l2_leaf_reg = v,
                            "num_iterations" => p.num_iterations = as_count(axis, v)?,
                            "min_samples_leaf" => p.min_samples_leaf = as_count(axis, v)?,
                            _ => {
                                return Err(EvalError::UnknownAxis {
                                    axis: axis.to_string(),
                                    family: family.name(),
                                })
                            }
                        }
                    }
                    Ok(ModelSpec::Boosted(p))
                }
                ModelFamily::Linear => unreachable!(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub family: ModelFamily,
    pub best: usize,
    pub results: Vec<CvResult>,
}

impl GridSearchResult {
    pub fn best_result(&self) -> &CvResult {
        &self.results[self.best]
    }
}

/// Index of the lowest mean RMSE; ties go to the lower std, then grid order.
pub fn best_cv_index(results: &[CvResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        best = match best {
            Some(b)
                if (results[b].mean_rmse, results[b].std_rmse) <= (r.mean_rmse, r.std_rmse)
                    || r.mean_rmse.is_nan() =>
            {
                Some(b)
            }
            _ => Some(i),
        };
    }
    best
}

/// Evaluates every spec against the same fold plan.
pub fn search_specs(
    family: ModelFamily,
    specs: &[ModelSpec],
    table: &FeatureTable,
    plan: &FoldPlan,
) -> Result<GridSearchResult, EvalError> {
    if specs.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let results: Vec<CvResult> = specs
        .par_iter()
        .map(|s| cross_validate(s, table, plan))
        .collect::<Result<_, _>>()?;
    let best = best_cv_index(&results).ok_or(EvalError::EmptyGrid)?;
    Ok(GridSearchResult {
        family,
        best,
        results,
    })
}

pub fn grid_search(
    family: ModelFamily,
    grid: &GridSpec,
    table: &FeatureTable,
    plan: &FoldPlan,
) -> Result<GridSearchResult, EvalError> {
    search_specs(family, &grid.expand(family)?, table, plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub truth: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub spec: ModelSpec,
    pub holdout_rmse: f64,
    pub residual_std: f64,
    pub predictions: Vec<PredictionRow>,
}

/// Fits scaler and model on `train`, scores `test`. The fitted model and
/// scaler are returned alongside the report.
pub fn evaluate_holdout(
    spec: &ModelSpec,
    table: &FeatureTable,
    train: &[usize],
    test: &[usize],
) -> Result<(TestReport, FittedModel, ScalerParams), EvalError> {
    let mut seen = vec![false; table.num_rows()];
    for &r in train {
        if r >= seen.len() {
            return Err(FeatureError::RowOutOfRange(r).into());
        }
        seen[r] = true;
    }
    if let Some(&r) = test.iter().find(|&&r| r < seen.len() && seen[r]) {
        return Err(EvalError::OverlappingSplit(r));
    }
    let (model, scaler) = fit_on_rows(spec, table, train)?;
    let pred = predict_rows(&model, &scaler, table, test)?;
    let truth: Vec<f64> = test.iter().map(|&r| table.y[r]).collect();
    let residuals: Vec<f64> = truth.iter().zip(&pred).map(|(t, p)| t - p).collect();
    let report = TestReport {
        spec: spec.clone(),
        holdout_rmse: rmse(&pred, &truth)?,
        residual_std: sample_std(&residuals),
        predictions: test
            .iter()
            .zip(truth.iter().zip(&pred))
            .map(|(&r, (&t, &p))| PredictionRow {
                id: table.row_ids[r].clone(),
                truth: t,
                prediction: p,
            })
            .collect(),
    };
    Ok((report, model, scaler))
}

/// Lowest holdout RMSE wins; any candidate within `tolerance` of it counts as
/// tied, and among the tied the lowest residual std (then earliest) wins.
pub fn select_best(candidates: &[(f64, f64)], tolerance: f64) -> Option<usize> {
    let min = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let mut best: Option<usize> = None;
    for (i, &(r, s)) in candidates.iter().enumerate() {
        if r - min > tolerance {
            continue;
        }
        if best.is_none_or(|b| s < candidates[b].1) {
            best = Some(i);
        }
    }
    best
}

pub fn family_label(family: ModelFamily) -> &'static str {
    match family {
        ModelFamily::Linear => "Linear Regression",
        ModelFamily::Knn => "KNN",
        ModelFamily::Boosted => "Boosted Trees",
    }
}

/// One line of the training or test table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub rmse: f64,
    pub std_dev: f64,
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub params: serde_json::Value,
    pub mean_rmse: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: String,
    pub model: String,
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_fold_rmse: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_rmse: Option<f64>,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_std: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid_results: Vec<GridEntry>,
}

impl PhaseRecord {
    pub fn training(search: &GridSearchResult, seed: u64) -> Self {
        let best = search.best_result();
        PhaseRecord {
            phase: "training".into(),
            model: family_label(search.family).into(),
            params: best.spec.params_json(),
            per_fold_rmse: Some(best.per_fold_rmse.clone()),
            mean_rmse: Some(best.mean_rmse),
            std: best.std_rmse,
            holdout_rmse: None,
            residual_std: None,
            seed,
            grid_results: search
                .results
                .iter()
                .map(|r| GridEntry {
                    params: r.spec.params_json(),
                    mean_rmse: r.mean_rmse,
                    std: r.std_rmse,
                })
                .collect(),
        }
    }

    pub fn test(report: &TestReport, seed: u64) -> Self {
        PhaseRecord {
            phase: "test".into(),
            model: family_label(report.spec.family()).into(),
            params: report.spec.params_json(),
            per_fold_rmse: None,
            mean_rmse: None,
            std: report.residual_std,
            holdout_rmse: Some(report.holdout_rmse),
            residual_std: Some(report.residual_std),
            seed,
            grid_results: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdDefinitions {
    pub training: String,
    pub test: String,
}

impl Default for StdDefinitions {
    fn default() -> Self {
        Self {
            training: TRAINING_STD_DEFINITION.into(),
            test: TEST_STD_DEFINITION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub cv_folds: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub std_definitions: StdDefinitions,
    pub selection_rule: String,
    pub selected_model: String,
    pub records: Vec<PhaseRecord>,
}

impl EvaluationReport {
    pub fn table(&self, phase: &str) -> Vec<TableRow> {
        self.records
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| TableRow {
                model: r.model.clone(),
                rmse: r.mean_rmse.or(r.holdout_rmse).unwrap_or(f64::NAN),
                std_dev: r.std,
            })
            .collect()
    }
}
