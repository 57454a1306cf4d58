//! Persisted model: the fitted regressor plus everything needed to turn raw
//! feature rows into model inputs.

use std::collections::HashMap;
use std::io::Read;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{apply_scaler, EncoderMap, FeatureError, ScalerParams};
use crate::models::{FittedModel, ModelError, ModelSpec};
use crate::topics::dominant_topic;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArtifactError {
    #[error("artifact schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("input is missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    MalformedNumber { row: usize, column: String, value: String },
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("malformed input CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub spec: ModelSpec,
    pub columns: Vec<String>,
    pub num_topics: usize,
    pub encoder: EncoderMap,
    pub scaler: ScalerParams,
    pub model: FittedModel,
    pub seed: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

impl ModelArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let probe: VersionProbe =
            serde_json::from_str(text).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
        if probe.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(ArtifactError::SchemaVersionMismatch {
                expected: ARTIFACT_SCHEMA_VERSION,
                found: probe.schema_version,
            });
        }
        serde_json::from_str(text).map_err(|e| ArtifactError::Malformed(e.to_string()))
    }

    /// Predictions on already assembled, unscaled feature rows.
    pub fn predict_raw(&self, x: &Array2<f64>) -> Result<Vec<f64>, ArtifactError> {
        let scaled = apply_scaler(x.view(), &self.scaler)?;
        Ok(self.model.predict(scaled.view())?)
    }
}

/// Rows parsed from a prediction input CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictInput {
    pub ids: Vec<String>,
    pub x: Array2<f64>,
    pub warnings: Vec<String>,
}

/// Reads `episode_id,topic_0..topic_{K-1},[dominant_topic],director,
/// viewers_millions,review_count` (a `director_code` column may replace
/// `director`). Directors not seen in training get the encoder's reserved
/// unknown code and a warning.
pub fn read_predict_input<R: Read>(artifact: &ModelArtifact, reader: R) -> Result<PredictInput, ArtifactError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ArtifactError::Csv(e.to_string()))?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| index.get(name).copied().ok_or_else(|| ArtifactError::MissingColumn(name.to_string()));
    let k = artifact.num_topics;
    let id_col = col("episode_id")?;
    let topic_cols: Vec<usize> = (0..k).map(|t| col(&format!("topic_{t}"))).collect::<Result<_, _>>()?;
    let dominant_col = index.get("dominant_topic").copied();
    let director_col = index.get("director").copied();
    let code_col = index.get("director_code").copied();
    if director_col.is_none() && code_col.is_none() {
        return Err(ArtifactError::MissingColumn("director".into()));
    }
    let viewers_col = col("viewers_millions")?;
    let reviews_col = col("review_count")?;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut warnings = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ArtifactError::Csv(e.to_string()))?;
        let num = |c: usize, name: &str| -> Result<f64, ArtifactError> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| ArtifactError::MalformedNumber {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let id = rec.get(id_col).unwrap_or("").to_string();
        let theta: Vec<f64> = topic_cols
            .iter()
            .enumerate()
            .map(|(t, &c)| num(c, &format!("topic_{t}")))
            .collect::<Result<_, _>>()?;
        let dominant = match dominant_col {
            Some(c) => num(c, "dominant_topic")?,
            None => dominant_topic(&theta) as f64,
        };
        let code = match director_col {
            Some(c) => {
                let name = rec.get(c).unwrap_or("");
                let (code, known) = artifact.encoder.encode(name);
                if !known {
                    warnings.push(format!(
                        "row {row} ({id}): unknown director `{name}` mapped to code {code}"
                    ));
                }
                code as f64
            }
            None => num(code_col.unwrap(), "director_code")?,
        };
        values.extend(theta);
        values.extend([dominant, code, num(viewers_col, "viewers_millions")?, num(reviews_col, "review_count")?]);
        ids.push(id);
    }
    let x = Array2::from_shape_vec((ids.len(), k + 4), values).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    Ok(PredictInput { ids, x, warnings })
}
