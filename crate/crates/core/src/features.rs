//! Modeling table assembly, director encoding, min-max scaling and the
//! descriptive statistics used to inspect the table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RawDataset;
use crate::rng::shuffled_indices;
use crate::topics::{dominant_topic, TopicModel};

pub const TARGET_COLUMN: &str = "imdb_rating";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("expected {expected} columns, found {found}")]
    ColumnCountMismatch { expected: usize, found: usize },
    #[error("need at least 2 rows, have {0}")]
    TooFewRows(usize),
    #[error("row set is empty")]
    EmptyRowSet,
    #[error("input is empty")]
    EmptyInput,
    #[error("episode `{0}` has no topic proportions")]
    MissingTopics(String),
    #[error("topic proportions of `{id}` sum to {sum}")]
    TopicsNotNormalized { id: String, sum: f64 },
    #[error("train fraction {0} must lie in (0, 1)")]
    InvalidFraction(f64),
    #[error("row index {0} out of range")]
    RowOutOfRange(usize),
}

/// Director name → ordinal code, assigned in lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderMap {
    pub mapping: BTreeMap<String, u32>,
    pub order_rule: String,
}

impl EncoderMap {
    pub fn code(&self, name: &str) -> Option<u32> {
        self.mapping.get(name).copied()
    }

    /// Code reserved for names not seen when the map was built.
    pub fn unknown_code(&self) -> u32 {
        self.mapping.len() as u32
    }

    /// The code for `name`, or the reserved unknown code and `false`.
    pub fn encode(&self, name: &str) -> (u32, bool) {
        match self.code(name) {
            Some(c) => (c, true),
            None => (self.unknown_code(), false),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

pub fn encode_directors(names: &[String]) -> (Vec<u32>, EncoderMap) {
    let unique: BTreeSet<&String> = names.iter().collect();
    let mapping: BTreeMap<String, u32> = unique
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i as u32))
        .collect();
    let codes = names.iter().map(|n| mapping[n]).collect();
    (
        codes,
        EncoderMap {
            mapping,
            order_rule: "lexicographic".to_string(),
        },
    )
}

/// Per-column ranges and the (sorted) rows they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub fitted_on: Vec<usize>,
}

impl ScalerParams {
    pub fn num_columns(&self) -> usize {
        self.mins.len()
    }

    /// Scales one row in place.
    pub fn scale_row(&self, row: &mut [f64]) {
        for ((x, &lo), &hi) in row.iter_mut().zip(&self.mins).zip(&self.maxs) {
            *x = if hi > lo { (*x - lo) / (hi - lo) } else { 0.0 };
        }
    }
}

pub fn fit_range_scaler(x: ArrayView2<'_, f64>, rows: &[usize]) -> Result<ScalerParams, FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::EmptyRowSet);
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= x.nrows()) {
        return Err(FeatureError::RowOutOfRange(r));
    }
    let mut mins = vec![f64::INFINITY; x.ncols()];
    let mut maxs = vec![f64::NEG_INFINITY; x.ncols()];
    for &r in rows {
        for (c, &v) in x.row(r).iter().enumerate() {
            mins[c] = mins[c].min(v);
            maxs[c] = maxs[c].max(v);
        }
    }
    let mut fitted_on = rows.to_vec();
    fitted_on.sort_unstable();
    fitted_on.dedup();
    Ok(ScalerParams {
        mins,
        maxs,
        fitted_on,
    })
}

/// `(x - min) / (max - min)` per column, unclipped; constant columns map to 0.
pub fn apply_scaler(x: ArrayView2<'_, f64>, params: &ScalerParams) -> Result<Array2<f64>, FeatureError> {
    if x.ncols() != params.num_columns() {
        return Err(FeatureError::ColumnCountMismatch {
            expected: params.num_columns(),
            found: x.ncols(),
        });
    }
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        params.scale_row(row.as_slice_mut().expect("standard layout"));
    }
    Ok(out)
}

/// Independent variables plus the untransformed rating target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub scaler: Option<ScalerParams>,
    pub encoder: EncoderMap,
}

pub fn feature_columns(num_topics: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..num_topics).map(|k| format!("topic_{k}")).collect();
    cols.extend(
        ["dominant_topic", "director_code", "viewers_millions", "review_count"].map(String::from),
    );
    cols
}

/// Joins topic proportions to episode metadata by episode id, in dataset
/// order. Columns: topic_0..topic_{K-1}, dominant_topic, director_code,
/// viewers_millions, review_count.
pub fn assemble_features(dataset: &RawDataset, model: &TopicModel) -> Result<FeatureTable, FeatureError> {
    let k = model.num_topics();
    let by_id: HashMap<&str, &Vec<f64>> = model
        .doc_ids
        .iter()
        .map(String::as_str)
        .zip(&model.theta)
        .collect();
    let names: Vec<String> = dataset.records.iter().map(|r| r.director_name.clone()).collect();
    let (codes, encoder) = encode_directors(&names);
    let columns = feature_columns(k);
    let mut x = Array2::zeros((dataset.records.len(), columns.len()));
    for (i, rec) in dataset.records.iter().enumerate() {
        let theta = by_id
            .get(rec.episode_id.as_str())
            .ok_or_else(|| FeatureError::MissingTopics(rec.episode_id.clone()))?;
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(FeatureError::TopicsNotNormalized {
                id: rec.episode_id.clone(),
                sum,
            });
        }
        let mut row = x.row_mut(i);
        for (c, &p) in theta.iter().enumerate() {
            row[c] = p;
        }
        row[k] = dominant_topic(theta) as f64;
        row[k + 1] = codes[i] as f64;
        row[k + 2] = rec.viewers_millions;
        row[k + 3] = rec.review_count as f64;
    }
    Ok(FeatureTable {
        row_ids: dataset.records.iter().map(|r| r.episode_id.clone()).collect(),
        columns,
        x,
        y: dataset.records.iter().map(|r| r.imdb_rating).collect(),
        scaler: None,
        encoder,
    })
}

impl FeatureTable {
    pub fn num_rows(&self) -> usize {
        self.y.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.x.column(c).to_vec())
    }

    /// A copy with X scaled by `params`; y is carried over untouched.
    pub fn scaled(&self, params: &ScalerParams) -> Result<FeatureTable, FeatureError> {
        Ok(FeatureTable {
            x: apply_scaler(self.x.view(), params)?,
            scaler: Some(params.clone()),
            ..self.clone()
        })
    }

    /// Export: `episode_id,<feature columns>,imdb_rating`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["episode_id".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push(TARGET_COLUMN.into());
        w.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Columns with zero variance; their correlations are reported as 0.
    pub zero_variance: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[i][j])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pearson r between two equal-length columns; `None` when either has zero
/// variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlations over every feature column and the target.
pub fn pearson_matrix(table: &FeatureTable) -> Result<CorrelationMatrix, FeatureError> {
    if table.num_rows() < 2 {
        return Err(FeatureError::TooFewRows(table.num_rows()));
    }
    let mut labels = table.columns.clone();
    labels.push(TARGET_COLUMN.to_string());
    let mut cols: Vec<Vec<f64>> = table.x.columns().into_iter().map(|c| c.to_vec()).collect();
    cols.push(table.y.clone());
    let n = cols.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut zero_variance = Vec::new();
    for i in 0..n {
        let constant = cols[i].iter().all(|&v| v == cols[i][0]);
        if constant {
            zero_variance.push(labels[i].clone());
        }
        values[i][i] = 1.0;
        for j in i + 1..n {
            let r = pearson(&cols[i], &cols[j]).unwrap_or(0.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        zero_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (divisor n − 1); 0 for a single value.
    pub std: f64,
}

pub fn describe(column: &[f64]) -> Result<Descriptives, FeatureError> {
    if column.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let ss: f64 = column.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(Descriptives {
        min: column.iter().copied().fold(f64::INFINITY, f64::min),
        max: column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: if column.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub start: f64,
    pub count: usize,
}

/// Half-open bins `[origin + i·width, origin + (i+1)·width)`, contiguous from
/// the lowest to the highest occupied bin.
pub fn histogram(values: &[f64], bin_width: f64, origin: f64) -> Vec<HistogramBin> {
    assert!(bin_width > 0.0, "bin width must be positive");
    if values.is_empty() {
        return Vec::new();
    }
    let idx: Vec<i64> = values
        .iter()
        .map(|v| ((v - origin) / bin_width).floor() as i64)
        .collect();
    let lo = *idx.iter().min().unwrap();
    let hi = *idx.iter().max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for i in idx {
        counts[(i - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(j, count)| HistogramBin {
            start: origin + (lo + j as i64) as f64 * bin_width,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Random,
    /// The first rows (in dataset order) train, the rest test.
    Chronological,
}

pub fn train_size(n: usize, train_fraction: f64) -> usize {
    // the epsilon keeps exact products such as 165 · 0.8 from flooring low
    (((n as f64) * train_fraction + 1e-9).floor() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Seeded random split; train size is ⌊n·fraction⌋. Both index lists are
/// returned sorted.
pub fn train_test_split(
    n: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), FeatureError> {
    split_with_mode(n, train_fraction, SplitMode::Random, seed)
}

pub fn split_with_mode(
    n: usize,
    train_fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), FeatureError> {
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FeatureError::InvalidFraction(train_fraction));
    }
    let cut = train_size(n, train_fraction);
    let order = match mode {
        SplitMode::Random => shuffled_indices(n, seed),
        SplitMode::Chronological => (0..n).collect(),
    };
    let mut train = order[..cut].to_vec();
    let mut test = order[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
