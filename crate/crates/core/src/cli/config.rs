//! Pipeline configuration (TOML).
//!
//! Only `seed` is required. Paths default to a data directory laid out as
//! `scripts/`, `metadata.csv` and an optional `html/`; the data directory
//! itself defaults to the directory holding the config file. Relative paths
//! resolve against that directory as well.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::GridSpec;
use crate::features::SplitMode;
use crate::ingest::TextDecoding;
use crate::models::BoostParams;
use crate::textprep::{LemmaRules, PrepConfig, StopwordList, TextprepError};
use crate::topics::LdaConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("config has no `seed`; pass one in the file or with --seed")]
    MissingSeed,
    #[error("{what} `{path}` does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Textprep(#[from] TextprepError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub scripts_dir: Option<PathBuf>,
    pub metadata_csv: Option<PathBuf>,
    pub html_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub script_pattern: Option<String>,
    pub text_decoding: TextDecoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextprepSection {
    pub bundled_stopwords: bool,
    pub stopword_files: Vec<PathBuf>,
    pub extra_stopwords: Vec<String>,
    pub lemma_rules: Option<PathBuf>,
    pub boilerplate_markers: Vec<String>,
    pub min_token_length: usize,
}

impl Default for TextprepSection {
    fn default() -> Self {
        let prep = PrepConfig::default();
        Self {
            bundled_stopwords: true,
            stopword_files: Vec::new(),
            extra_stopwords: Vec::new(),
            lemma_rules: None,
            boilerplate_markers: prep.boilerplate_markers,
            min_token_length: prep.min_token_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub num_topics: usize,
    /// Defaults to 50 / num_topics.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    pub top_keywords: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        let d = LdaConfig::new(3, 0);
        Self {
            num_topics: 3,
            alpha: None,
            beta: d.beta,
            iterations: d.iterations,
            burn_in: d.burn_in,
            sample_lag: d.sample_lag,
            top_keywords: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub knn_k: Vec<usize>,
    pub boost_learning_rate: Vec<f64>,
    pub boost_depth: Vec<usize>,
    pub boost_l2_leaf_reg: Vec<f64>,
    pub boost_num_iterations: usize,
    pub boost_min_samples_leaf: usize,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            knn_k: (1..=16).collect(),
            boost_learning_rate: vec![0.03, 0.1, 0.2],
            boost_depth: vec![4, 6, 10, 20, 30],
            boost_l2_leaf_reg: vec![1.0, 3.0, 5.0, 7.0, 9.0, 12.0, 15.0],
            boost_num_iterations: 500,
            boost_min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub mode: SplitMode,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            mode: SplitMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { folds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub textprep: TextprepSection,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Absolute input and output locations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedPaths {
    pub scripts_dir: PathBuf,
    pub metadata_csv: PathBuf,
    pub html_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// All defaults, rooted at `base_dir`.
    pub fn with_defaults(base_dir: &Path, seed: u64) -> Self {
        let mut cfg = Self::parse("", base_dir).expect("empty config parses");
        cfg.seed = Some(seed);
        cfg
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::MissingSeed)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn data_dir(&self) -> PathBuf {
        match &self.data_dir {
            Some(d) => self.resolve(d),
            None => self.base_dir.clone(),
        }
    }

    pub fn paths(&self) -> ResolvedPaths {
        let data = self.data_dir();
        let under = |explicit: &Option<PathBuf>, default: &str| match explicit {
            Some(p) => self.resolve(p),
            None => data.join(default),
        };
        let html_dir = match &self.paths.html_dir {
            Some(p) => Some(self.resolve(p)),
            None => Some(data.join("html")).filter(|p| p.is_dir()),
        };
        ResolvedPaths {
            scripts_dir: under(&self.paths.scripts_dir, "scripts"),
            metadata_csv: under(&self.paths.metadata_csv, "metadata.csv"),
            html_dir,
            output_dir: match &self.paths.output_dir {
                Some(p) => self.resolve(p),
                None => self.base_dir.join("out"),
            },
        }
    }

    pub fn script_pattern(&self) -> &str {
        self.paths.script_pattern.as_deref().unwrap_or("s{SS}e{EE}.txt")
    }

    /// Checks everything that can be checked before any stage runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.seed()?;
        let p = self.paths();
        if !p.scripts_dir.is_dir() {
            return Err(ConfigError::MissingPath {
                what: "scripts directory",
                path: p.scripts_dir,
            });
        }
        if !p.metadata_csv.is_file() {
            return Err(ConfigError::MissingPath {
                what: "metadata CSV",
                path: p.metadata_csv,
            });
        }
        if let Some(h) = &p.html_dir {
            if !h.is_dir() {
                return Err(ConfigError::MissingPath {
                    what: "HTML snapshot directory",
                    path: h.clone(),
                });
            }
        }
        for f in self.textprep.stopword_files.iter().chain(&self.textprep.lemma_rules) {
            let path = self.resolve(f);
            if !path.is_file() {
                return Err(ConfigError::MissingPath {
                    what: "text-preparation file",
                    path,
                });
            }
        }
        self.validate_values()
    }

    /// Range checks that do not touch the file system.
    pub fn validate_values(&self) -> Result<(), ConfigError> {
        let invalid = |key, reason: String| Err(ConfigError::Invalid { key, reason });
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return invalid("split.train_fraction", format!("{} is not in (0, 1)", self.split.train_fraction));
        }
        if self.cv.folds < 2 {
            return invalid("cv.folds", format!("{} < 2", self.cv.folds));
        }
        if self.models.knn_k.is_empty() || self.models.knn_k.contains(&0) {
            return invalid("models.knn_k", "must be a non-empty list of positive integers".into());
        }
        if self.models.boost_learning_rate.is_empty()
            || self.models.boost_depth.is_empty()
            || self.models.boost_l2_leaf_reg.is_empty()
        {
            return invalid("models.boost_*", "boost grid axes must be non-empty".into());
        }
        let mut p = BoostParams::default();
        for &lr in &self.models.boost_learning_rate {
            for &depth in &self.models.boost_depth {
                for &l2 in &self.models.boost_l2_leaf_reg {
                    p.learning_rate = lr;
                    p.depth = depth;
                    p.l2_leaf_reg = l2;
                    if let Err(e) = p.validate() {
                        return invalid("models.boost_*", e.to_string());
                    }
                }
            }
        }
        self.lda_config(0).validate().map_err(|e| ConfigError::Invalid {
            key: "lda",
            reason: e.to_string(),
        })?;
        if self.textprep.min_token_length == 0 {
            return invalid("textprep.min_token_length", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn prep_config(&self) -> Result<PrepConfig, ConfigError> {
        let t = &self.textprep;
        let mut stopwords = if t.bundled_stopwords {
            StopwordList::bundled()
        } else {
            StopwordList::default()
        };
        for f in &t.stopword_files {
            stopwords.extend(StopwordList::load(&self.resolve(f))?);
        }
        for w in &t.extra_stopwords {
            stopwords.insert(w);
        }
        let lemma_rules = match &t.lemma_rules {
            Some(f) => LemmaRules::load(&self.resolve(f))?,
            None => LemmaRules::bundled(),
        };
        Ok(PrepConfig {
            stopwords,
            lemma_rules,
            boilerplate_markers: t.boilerplate_markers.clone(),
            min_token_length: t.min_token_length,
        })
    }

    pub fn lda_config(&self, seed: u64) -> LdaConfig {
        let mut c = LdaConfig::new(self.lda.num_topics, seed);
        if let Some(a) = self.lda.alpha {
            c.alpha = a;
        }
        c.beta = self.lda.beta;
        c.iterations = self.lda.iterations;
        c.burn_in = self.lda.burn_in;
        c.sample_lag = self.lda.sample_lag;
        c
    }

    pub fn knn_grid(&self) -> GridSpec {
        GridSpec::new(vec![("k", self.models.knn_k.iter().map(|&k| k as f64).collect())])
    }

    pub fn boost_grid(&self, seed: u64) -> GridSpec {
        let m = &self.models;
        GridSpec::new(vec![
            ("learning_rate", m.boost_learning_rate.clone()),
            ("depth", m.boost_depth.iter().map(|&d| d as f64).collect()),
            ("l2_leaf_reg", m.boost_l2_leaf_reg.clone()),
        ])
        .with_base(BoostParams {
            num_iterations: m.boost_num_iterations,
            min_samples_leaf: m.boost_min_samples_leaf,
            seed,
            ..BoostParams::default()
        })
    }
}
