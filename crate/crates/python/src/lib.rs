//! Python bindings for the episode-rating pipeline.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use episode_rating::cli::{Pipeline, PipelineConfig};
use episode_rating::evaluate;
use episode_rating::features;
use episode_rating::models::{BoostParams, FittedModel, ModelSpec};
use episode_rating::textprep::{self, LemmaRules, PrepConfig, TokenizedDoc};
use episode_rating::topics::{self, LdaConfig, TopicModel};

fn value_err<E: Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (text, min_length = textprep::DEFAULT_MIN_TOKEN_LENGTH))]
fn tokenize(text: &str, min_length: usize) -> Vec<String> {
    textprep::tokenize_with_min(text, min_length)
}

/// Lemma under the bundled rules.
#[pyfunction]
fn lemmatize(token: &str) -> String {
    textprep::lemmatize(token, &LemmaRules::bundled())
}

/// Full cleaning with the default settings: boilerplate, stopwords, lemmas.
#[pyfunction]
fn clean_text(text: &str) -> Vec<String> {
    textprep::clean_text(text, &PrepConfig::default())
}

#[pyclass(name = "TopicModel", module = "episode_rating_py")]
struct PyTopicModel {
    inner: TopicModel,
}

#[pymethods]
impl PyTopicModel {
    #[getter]
    fn phi(&self) -> Vec<Vec<f64>> {
        self.inner.phi.clone()
    }

    #[getter]
    fn theta(&self) -> Vec<Vec<f64>> {
        self.inner.theta.clone()
    }

    #[getter]
    fn doc_ids(&self) -> Vec<String> {
        self.inner.doc_ids.clone()
    }

    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary.terms().to_vec()
    }

    #[getter]
    fn num_topics(&self) -> usize {
        self.inner.num_topics()
    }

    fn dominant_topics(&self) -> Vec<usize> {
        self.inner.dominant_topics()
    }

    #[pyo3(signature = (topic, n = 10))]
    fn top_keywords(&self, topic: usize, n: usize) -> PyResult<Vec<(String, f64)>> {
        topics::top_keywords(&self.inner, topic, n).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }
}

/// Fits LDA on pre-tokenized documents.
#[pyfunction]
#[pyo3(signature = (docs, num_topics, seed, iterations = 1000, burn_in = 500, sample_lag = 10, doc_ids = None))]
#[allow(clippy::too_many_arguments)]
fn fit_lda(
    docs: Vec<Vec<String>>,
    num_topics: usize,
    seed: u64,
    iterations: usize,
    burn_in: usize,
    sample_lag: usize,
    doc_ids: Option<Vec<String>>,
) -> PyResult<PyTopicModel> {
    let ids = doc_ids.unwrap_or_else(|| (0..docs.len()).map(|i| format!("doc{i}")).collect());
    if ids.len() != docs.len() {
        return Err(PyValueError::new_err("doc_ids and docs differ in length"));
    }
    let docs: Vec<TokenizedDoc> = ids
        .into_iter()
        .zip(docs)
        .map(|(episode_id, tokens)| TokenizedDoc { episode_id, tokens })
        .collect();
    let vocab = textprep::build_vocabulary(&docs);
    let bow = textprep::to_bag_of_words(&docs, &vocab).map_err(value_err)?;
    let mut cfg = LdaConfig::new(num_topics, seed);
    cfg.iterations = iterations;
    cfg.burn_in = burn_in;
    cfg.sample_lag = sample_lag;
    let inner = topics::fit_lda(&bow, &cfg).map_err(value_err)?;
    Ok(PyTopicModel { inner })
}

#[pyclass(name = "Model", module = "episode_rating_py")]
struct PyModel {
    inner: FittedModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().name()
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = to_array(x)?;
        self.inner.predict(x.view()).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_err)?,
        })
    }
}

fn fit_spec(spec: ModelSpec, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<PyModel> {
    let x = to_array(x)?;
    let inner = spec.fit(x.view(), &y).map_err(value_err)?;
    Ok(PyModel { inner })
}

#[pyfunction]
fn fit_linear(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<PyModel> {
    fit_spec(ModelSpec::Linear, x, y)
}

#[pyfunction]
fn fit_knn(x: Vec<Vec<f64>>, y: Vec<f64>, k: usize) -> PyResult<PyModel> {
    fit_spec(ModelSpec::Knn { k }, x, y)
}

#[pyfunction]
#[pyo3(signature = (x, y, learning_rate = 0.1, depth = 6, l2_leaf_reg = 3.0, num_iterations = 500, min_samples_leaf = 1))]
fn fit_boosted(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    learning_rate: f64,
    depth: usize,
    l2_leaf_reg: f64,
    num_iterations: usize,
    min_samples_leaf: usize,
) -> PyResult<PyModel> {
    let params = BoostParams {
        learning_rate,
        depth,
        l2_leaf_reg,
        num_iterations,
        min_samples_leaf,
        ..BoostParams::default()
    };
    fit_spec(ModelSpec::Boosted(params), x, y)
}

#[pyfunction]
fn rmse(predictions: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    evaluate::rmse(&predictions, &truth).map_err(value_err)
}

/// Validation folds of a seeded k-fold plan.
#[pyfunction]
fn kfold_indices(n: usize, k: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    Ok(evaluate::kfold_indices(n, k, seed).map_err(value_err)?.folds)
}

#[pyfunction]
fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    features::train_test_split(n, train_fraction, seed).map_err(value_err)
}

/// Codes per name plus the name → code map.
#[pyfunction]
fn encode_directors(names: Vec<String>) -> (Vec<u32>, BTreeMap<String, u32>) {
    let (codes, map) = features::encode_directors(&names);
    (codes, map.mapping)
}

/// Min-max scales every column on its own range.
#[pyfunction]
fn min_max_scale(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let x = to_array(x)?;
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let params = features::fit_range_scaler(x.view(), &rows).map_err(value_err)?;
    let scaled = features::apply_scaler(x.view(), &params).map_err(value_err)?;
    Ok(scaled.rows().into_iter().map(|r| r.to_vec()).collect())
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> Option<f64> {
    features::pearson(&a, &b)
}

/// Runs every stage; returns report.json contents.
#[pyfunction]
#[pyo3(signature = (config, out, seed = None))]
fn run_pipeline(config: PathBuf, out: PathBuf, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = PipelineConfig::load(&config).map_err(value_err)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    let mut p = Pipeline::new(cfg, out, true).map_err(value_err)?;
    let report = p.run_all().map_err(value_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn episode_rating_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopicModel>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(lemmatize, m)?)?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lda, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear, m)?)?;
    m.add_function(wrap_pyfunction!(fit_knn, m)?)?;
    m.add_function(wrap_pyfunction!(fit_boosted, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_indices, m)?)?;
    m.add_function(wrap_pyfunction!(train_test_split, m)?)?;
    m.add_function(wrap_pyfunction!(encode_directors, m)?)?;
    m.add_function(wrap_pyfunction!(min_max_scale, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(to_array(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert_eq!(to_array(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()[[1, 0]], 3.0);
        assert_eq!(to_array(Vec::new()).unwrap().dim(), (0, 0));
    }
}
