//! Pipeline stages. Every stage reads its inputs from, and writes its outputs
//! to, the output directory, so running stages one by one and `run --all`
//! produce the same files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::artifact::{read_predict_input, ModelArtifact, ARTIFACT_SCHEMA_VERSION};
use super::config::PipelineConfig;
use super::manifest::{OutputEntry, RunManifest, StageEntry};
use super::CliError;
use crate::evaluate::{
    evaluate_holdout, grid_search, kfold_indices, select_best, write_table_csv, EvaluationReport, GridSearchResult,
    PhaseRecord, StdDefinitions, TestReport, SELECTION_TOLERANCE,
};
use crate::features::{
    assemble_features, describe, histogram, pearson_matrix, split_with_mode, Descriptives, FeatureTable, HistogramBin,
};
use crate::ingest::{
    apply_episode_table, load_metadata_csv, load_scripts, merge_dataset, parse_episode_table_html, season_from_filename,
    sha256_hex, write_metadata_csv, RawDataset, ScriptNaming, SourceEntry, SourceKind,
};
use crate::models::{FittedModel, ModelFamily};
use crate::rng::StreamSeeds;
use crate::textprep::{build_vocabulary, prepare_corpus, to_bag_of_words, word_frequencies, BagOfWords};
use crate::topics::{fit_lda, format_keywords, top_keywords, topic_distance_matrix, TopicModel};

pub const DATASET_JSON: &str = "dataset.json";
pub const DATASET_CSV: &str = "dataset.csv";
pub const CORPUS_JSON: &str = "corpus.json";
pub const BOW_CSV: &str = "bow.csv";
pub const WORD_FREQ_CSV: &str = "word_frequencies.csv";
pub const TOPIC_MODEL_JSON: &str = "topic_model.json";
pub const THETA_CSV: &str = "theta.csv";
pub const KEYWORDS_TXT: &str = "keywords.txt";
pub const TOPIC_DISTANCES_CSV: &str = "topic_distances.csv";
pub const FEATURES_JSON: &str = "features.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const DESCRIPTIVES_JSON: &str = "descriptives.json";
pub const REPORT_JSON: &str = "report.json";
pub const TRAINING_CSV: &str = "training_results.csv";
pub const TEST_CSV: &str = "test_results.csv";
pub const HOLDOUT_CSV: &str = "holdout_predictions.csv";
pub const MODEL_JSON: &str = "model.json";
pub const REPORT_TXT: &str = "report.txt";

pub const FAMILIES: [ModelFamily; 3] = [ModelFamily::Linear, ModelFamily::Knn, ModelFamily::Boosted];

pub struct Pipeline {
    pub config: PipelineConfig,
    pub seeds: StreamSeeds,
    pub out_dir: PathBuf,
    pub quiet: bool,
    manifest: RunManifest,
    outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub column: String,
    pub stats: Descriptives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptivesReport {
    pub rows: usize,
    pub columns: Vec<ColumnSummary>,
    pub rating_histogram: Vec<HistogramBin>,
    pub rating_share_8_to_9: f64,
    pub zero_variance_columns: Vec<String>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out_dir: PathBuf, quiet: bool) -> Result<Self, CliError> {
        config.validate_values()?;
        let seeds = StreamSeeds::from_master(config.seed()?);
        fs::create_dir_all(&out_dir).map_err(|e| CliError::Config(format!("cannot create `{}`: {e}", out_dir.display())))?;
        let mut paths = config.paths();
        paths.output_dir = out_dir.clone();
        let manifest = RunManifest::open(&out_dir, &config, seeds, paths);
        Ok(Self {
            config,
            seeds,
            out_dir,
            quiet,
            manifest,
            outputs: Vec::new(),
        })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        eprintln!("warning: {}", msg.as_ref());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Invariant(format!("cannot write `{}`: {e}", path.display())))?;
        self.outputs.push(OutputEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))? + "\n";
        self.write(name, text.as_bytes())
    }

    fn write_csv_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::Invariant(e.to_string()))?;
        self.write(name, &buf)
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T, CliError> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).map_err(|_| {
            CliError::Data(format!("`{}` not found; run the `{producer}` stage first", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("`{}` is malformed: {e}", path.display())))
    }

    fn stage<T>(&mut self, name: &str, run: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        self.outputs.clear();
        let value = run(self)?;
        let entry = StageEntry {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            outputs: std::mem::take(&mut self.outputs),
        };
        self.manifest.record(entry);
        self.manifest
            .save(&self.out_dir)
            .map_err(|e| CliError::Invariant(format!("cannot write manifest: {e}")))?;
        Ok(value)
    }

    pub fn ingest(&mut self) -> Result<RawDataset, CliError> {
        self.config.validate()?;
        self.stage("ingest", |p| {
            let paths = p.config.paths();
            let meta_bytes = fs::read(&paths.metadata_csv)
                .map_err(|e| CliError::Config(format!("cannot read `{}`: {e}", paths.metadata_csv.display())))?;
            let mut sources = vec![SourceEntry::new(&paths.metadata_csv, SourceKind::MetadataCsv, &meta_bytes)];
            let mut metadata = load_metadata_csv(&paths.metadata_csv)?;
            if let Some(dir) = &paths.html_dir {
                let mut files: Vec<PathBuf> = fs::read_dir(dir)
                    .map_err(|e| CliError::Data(format!("cannot list `{}`: {e}", dir.display())))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("html") || x.eq_ignore_ascii_case("htm")))
                    .collect();
                files.sort();
                for file in files {
                    let Some(season) = season_from_filename(&file) else {
                        p.warn(format!("skipping `{}`: no season number in the file name", file.display()));
                        continue;
                    };
                    let bytes = fs::read(&file).map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", file.display())))?;
                    let html = String::from_utf8_lossy(&bytes);
                    let table = parse_episode_table_html(&html)
                        .map_err(|e| CliError::Data(format!("`{}`: {e}", file.display())))?;
                    for r in &table.rejected {
                        p.warn(format!("`{}`: {r}", file.display()));
                    }
                    for w in apply_episode_table(&mut metadata, season, &table) {
                        p.warn(w);
                    }
                    sources.push(SourceEntry::new(&file, SourceKind::HtmlSnapshot, &bytes));
                }
            }
            let naming = ScriptNaming::new(p.config.script_pattern()).map_err(|e| CliError::Config(e.to_string()))?;
            let scripts = load_scripts(&paths.scripts_dir, &naming, p.config.paths.text_decoding)?;
            let mut dataset = merge_dataset(metadata, &scripts.texts)?;
            sources.extend(scripts.sources);
            dataset.source_manifest = sources.clone();
            p.manifest.inputs = sources;
            p.write_json(DATASET_JSON, &dataset)?;
            p.write_csv_with(DATASET_CSV, |buf| write_metadata_csv(&dataset.records, buf))?;
            p.say(format!("ingest: {} episodes", dataset.records.len()));
            Ok(dataset)
        })
    }

    pub fn prep(&mut self) -> Result<BagOfWords, CliError> {
        let dataset: RawDataset = self.read_json(DATASET_JSON, "ingest")?;
        let prep = self.config.prep_config()?;
        self.stage("prep", |p| {
            let docs = prepare_corpus(
                dataset.records.iter().map(|r| (r.episode_id.as_str(), r.script_text.as_str())),
                &prep,
            );
            let vocab = build_vocabulary(&docs);
            let bow = to_bag_of_words(&docs, &vocab).map_err(|e| CliError::Invariant(e.to_string()))?;
            p.write_json(CORPUS_JSON, &bow)?;
            p.write_csv_with(BOW_CSV, |buf| bow.write_triplets_csv(buf))?;
            let freqs = word_frequencies(&bow, 50);
            p.write_csv_with(WORD_FREQ_CSV, |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["term", "count"])?;
                for (t, c) in &freqs {
                    w.write_record([t.as_str(), &c.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            p.say(format!("prep: {} documents, vocabulary of {} terms", bow.num_docs(), bow.vocabulary.len()));
            Ok(bow)
        })
    }

    pub fn topics(&mut self) -> Result<TopicModel, CliError> {
        let bow: BagOfWords = self.read_json(CORPUS_JSON, "prep")?;
        let lda = self.config.lda_config(self.seeds.lda);
        let top_n = self.config.lda.top_keywords;
        self.stage("topics", |p| {
            let model = fit_lda(&bow, &lda)?;
            p.write_json(TOPIC_MODEL_JSON, &model)?;
            p.write_csv_with(THETA_CSV, |buf| model.write_theta_csv(buf))?;
            let mut listing = String::new();
            for k in 0..model.num_topics() {
                let kw = top_keywords(&model, k, top_n)?;
                writeln!(listing, "({k}, '{}')", format_keywords(&kw)).unwrap();
            }
            p.write(KEYWORDS_TXT, listing.as_bytes())?;
            let dist = topic_distance_matrix(&model);
            p.write_csv_with(TOPIC_DISTANCES_CSV, |buf| {
                let mut w = csv::Writer::from_writer(buf);
                let mut header = vec!["topic".to_string()];
                header.extend((0..dist.len()).map(|k| format!("topic_{k}")));
                w.write_record(&header)?;
                for (k, row) in dist.iter().enumerate() {
                    let mut rec = vec![format!("topic_{k}")];
                    rec.extend(row.iter().map(|v| v.to_string()));
                    w.write_record(&rec)?;
                }
                w.flush()?;
                Ok(())
            })?;
            p.say(format!("topics: {} topics over {} documents", model.num_topics(), model.doc_ids.len()));
            if !p.quiet {
                print!("{listing}");
            }
            Ok(model)
        })
    }

    pub fn features(&mut self) -> Result<FeatureTable, CliError> {
        let dataset: RawDataset = self.read_json(DATASET_JSON, "ingest")?;
        let model: TopicModel = self.read_json(TOPIC_MODEL_JSON, "topics")?;
        self.stage("features", |p| {
            let table = assemble_features(&dataset, &model)?;
            let corr = pearson_matrix(&table)?;
            let mut columns = Vec::new();
            for name in table.columns.iter() {
                columns.push(ColumnSummary {
                    column: name.clone(),
                    stats: describe(&table.column(name).expect("own column"))?,
                });
            }
            columns.push(ColumnSummary {
                column: crate::features::TARGET_COLUMN.into(),
                stats: describe(&table.y)?,
            });
            let in_8_9 = table.y.iter().filter(|&&r| (8.0..9.0).contains(&r)).count();
            let desc = DescriptivesReport {
                rows: table.num_rows(),
                columns,
                rating_histogram: histogram(&table.y, 0.5, 0.0),
                rating_share_8_to_9: in_8_9 as f64 / table.num_rows() as f64,
                zero_variance_columns: corr.zero_variance.clone(),
            };
            for c in &corr.zero_variance {
                p.warn(format!("column `{c}` has zero variance; its correlations are reported as 0"));
            }
            p.write_json(FEATURES_JSON, &table)?;
            p.write_csv_with(FEATURES_CSV, |buf| table.write_csv(buf))?;
            p.write_csv_with(CORRELATIONS_CSV, |buf| corr.write_csv(buf))?;
            p.write_json(DESCRIPTIVES_JSON, &desc)?;
            p.say(format!("features: {} rows x {} columns", table.num_rows(), table.columns.len()));
            Ok(table)
        })
    }

    pub fn train_eval(&mut self) -> Result<EvaluationReport, CliError> {
        let table: FeatureTable = self.read_json(FEATURES_JSON, "features")?;
        let cfg = self.config.clone();
        let seeds = self.seeds;
        self.stage("train-eval", |p| {
            let (train, test) =
                split_with_mode(table.num_rows(), cfg.split.train_fraction, cfg.split.mode, seeds.split)?;
            let train_table = subset(&table, &train);
            let plan = kfold_indices(train.len(), cfg.cv.folds, seeds.cv)?;
            let mut searches: Vec<GridSearchResult> = Vec::new();
            let mut holdouts: Vec<(TestReport, FittedModel, crate::features::ScalerParams)> = Vec::new();
            for family in FAMILIES {
                let grid = match family {
                    ModelFamily::Knn => cfg.knn_grid(),
                    _ => cfg.boost_grid(seeds.boost),
                };
                let search = grid_search(family, &grid, &train_table, &plan)?;
                let best = search.best_result().spec.clone();
                p.say(format!(
                    "train-eval: {} cv rmse {:.4} (std {:.4}) over {} grid point(s)",
                    best.label(),
                    search.best_result().mean_rmse,
                    search.best_result().std_rmse,
                    search.results.len()
                ));
                holdouts.push(evaluate_holdout(&best, &table, &train, &test)?);
                searches.push(search);
            }
            let candidates: Vec<(f64, f64)> = holdouts.iter().map(|h| (h.0.holdout_rmse, h.0.residual_std)).collect();
            let chosen = select_best(&candidates, SELECTION_TOLERANCE)
                .ok_or_else(|| CliError::Invariant("no finite holdout RMSE".into()))?;

            let mut records: Vec<PhaseRecord> = searches.iter().map(|s| PhaseRecord::training(s, seeds.master)).collect();
            records.extend(holdouts.iter().map(|h| PhaseRecord::test(&h.0, seeds.master)));
            let report = EvaluationReport {
                schema_version: 1,
                seed: seeds.master,
                cv_folds: cfg.cv.folds,
                train_rows: train.len(),
                test_rows: test.len(),
                std_definitions: StdDefinitions::default(),
                selection_rule: format!(
                    "lowest holdout RMSE; candidates within {SELECTION_TOLERANCE} of it are tied and the lowest residual std wins"
                ),
                selected_model: crate::evaluate::family_label(FAMILIES[chosen]).into(),
                records,
            };
            p.write_json(REPORT_JSON, &report)?;
            p.write_csv_with(TRAINING_CSV, |buf| write_table_csv(&report.table("training"), buf))?;
            p.write_csv_with(TEST_CSV, |buf| write_table_csv(&report.table("test"), buf))?;
            p.write_csv_with(HOLDOUT_CSV, |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["model", "episode_id", "imdb_rating", "prediction"])?;
                for (h, _, _) in &holdouts {
                    let label = crate::evaluate::family_label(h.spec.family());
                    for r in &h.predictions {
                        w.write_record([label, &r.id, &r.truth.to_string(), &r.prediction.to_string()])?;
                    }
                }
                w.flush()?;
                Ok(())
            })?;
            for (i, (h, model, scaler)) in holdouts.into_iter().enumerate() {
                let artifact = ModelArtifact {
                    schema_version: ARTIFACT_SCHEMA_VERSION,
                    spec: h.spec,
                    columns: table.columns.clone(),
                    num_topics: table.columns.len() - 4,
                    encoder: table.encoder.clone(),
                    scaler,
                    model,
                    seed: seeds.master,
                };
                let json = artifact.to_json();
                p.write(&format!("model_{}.json", FAMILIES[i].name()), json.as_bytes())?;
                if i == chosen {
                    p.write(MODEL_JSON, json.as_bytes())?;
                }
            }
            p.say(format!("train-eval: selected {}", report.selected_model));
            Ok(report)
        })
    }

    pub fn report(&mut self) -> Result<String, CliError> {
        let report: EvaluationReport = self.read_json(REPORT_JSON, "train-eval")?;
        self.stage("report", |p| {
            let text = render_report(&report);
            p.write(REPORT_TXT, text.as_bytes())?;
            if !p.quiet {
                print!("{text}");
            }
            Ok(text)
        })
    }

    pub fn run_all(&mut self) -> Result<EvaluationReport, CliError> {
        self.ingest()?;
        self.prep()?;
        self.topics()?;
        self.features()?;
        let report = self.train_eval()?;
        self.report()?;
        Ok(report)
    }
}

fn subset(table: &FeatureTable, rows: &[usize]) -> FeatureTable {
    FeatureTable {
        row_ids: rows.iter().map(|&r| table.row_ids[r].clone()).collect(),
        columns: table.columns.clone(),
        x: table.x.select(ndarray::Axis(0), rows),
        y: rows.iter().map(|&r| table.y[r]).collect(),
        scaler: None,
        encoder: table.encoder.clone(),
    }
}

pub fn render_report(report: &EvaluationReport) -> String {
    let mut s = String::new();
    for (phase, title) in [("training", "Training results (cross-validation)"), ("test", "Test results (holdout)")] {
        writeln!(s, "{title}").unwrap();
        writeln!(s, "{:<20} {:>8} {:>8}", "Model", "RMSE", "Std").unwrap();
        for row in report.table(phase) {
            writeln!(s, "{:<20} {:>8.4} {:>8.4}", row.model, row.rmse, row.std_dev).unwrap();
        }
        writeln!(s).unwrap();
    }
    writeln!(s, "Selected model: {}", report.selected_model).unwrap();
    writeln!(s, "Selection rule: {}", report.selection_rule).unwrap();
    writeln!(s, "Training std: {}", report.std_definitions.training).unwrap();
    writeln!(s, "Test std: {}", report.std_definitions.test).unwrap();
    writeln!(
        s,
        "Rows: {} train / {} test, {}-fold CV, seed {}",
        report.train_rows, report.test_rows, report.cv_folds, report.seed
    )
    .unwrap();
    s
}

/// Scores a prediction CSV with a saved artifact; writes `episode_id,prediction`.
/// Returns the number of rows and the warnings emitted.
pub fn predict_file(model: &Path, input: &Path, output: Option<&Path>) -> Result<(usize, Vec<String>), CliError> {
    let text = fs::read_to_string(model)
        .map_err(|e| CliError::Data(format!("cannot read model `{}`: {e}", model.display())))?;
    let artifact = ModelArtifact::from_json(&text)?;
    let file = fs::File::open(input).map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", input.display())))?;
    let rows = read_predict_input(&artifact, file)?;
    let preds = if rows.ids.is_empty() {
        Vec::new()
    } else {
        artifact.predict_raw(&rows.x)?
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode_id", "prediction"]).map_err(|e| CliError::Invariant(e.to_string()))?;
    for (id, p) in rows.ids.iter().zip(&preds) {
        w.write_record([id.as_str(), &p.to_string()]).map_err(|e| CliError::Invariant(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Invariant(e.to_string()))?;
    match output {
        Some(path) => fs::write(path, &bytes).map_err(|e| CliError::Invariant(format!("cannot write `{}`: {e}", path.display())))?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok((rows.ids.len(), rows.warnings))
}
