mod common;

use std::fs;

use common::{fixture, quick_config, snapshot};
use episode_rating::cli::artifact::read_predict_input;
use episode_rating::cli::stages::{predict_file, FEATURES_JSON, MODEL_JSON, REPORT_JSON};
use episode_rating::cli::{ArtifactError, ModelArtifact, Pipeline, PipelineConfig, ARTIFACT_SCHEMA_VERSION};
use episode_rating::evaluate::{fit_on_rows, EvaluationReport};
use episode_rating::features::{apply_scaler, FeatureTable};
use episode_rating::models::{BoostParams, ModelSpec};
use episode_rating::topics::{top_keywords, TopicModel};

fn pipeline(dir: &std::path::Path, seed: u64, extra: &str) -> Pipeline {
    let cfg = PipelineConfig::load(&quick_config(dir, seed, extra)).unwrap();
    Pipeline::new(cfg, dir.join("out"), true).unwrap()
}

#[test]
fn stagewise_and_all_in_one_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut p = pipeline(a.path(), 3, "");
    p.run_all().unwrap();
    let mut q = pipeline(b.path(), 3, "");
    q.ingest().unwrap();
    q.prep().unwrap();
    q.topics().unwrap();
    q.features().unwrap();
    q.train_eval().unwrap();
    q.report().unwrap();
    let sa = snapshot(&a.path().join("out"), &["run_manifest.json"]);
    let sb = snapshot(&b.path().join("out"), &["run_manifest.json"]);
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{k} differs");
    }

    let report: EvaluationReport = serde_json::from_str(&fs::read_to_string(a.path().join("out").join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(report.table("training").len(), 3);
    assert_eq!(report.table("test").len(), 3);
    assert!(report.table("training").iter().chain(&report.table("test")).all(|r| r.rmse.is_finite() && r.std_dev.is_finite()));
    assert_eq!((report.train_rows, report.test_rows), (32, 8));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("out").join("run_manifest.json")).unwrap()).unwrap();
    let stages: Vec<&str> = manifest["stages"].as_array().unwrap().iter().map(|s| s["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["ingest", "prep", "topics", "features", "train-eval", "report"]);
    let listed: usize = manifest["stages"].as_array().unwrap().iter().map(|s| s["outputs"].as_array().unwrap().len()).sum();
    assert_eq!(listed, sa.len());
}

#[test]
fn seed_changes_values_not_schema() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path(), 1, "").run_all().unwrap();
    let rb = pipeline(b.path(), 2, "").run_all().unwrap();
    assert_ne!(ra.table("test"), rb.table("test"));
    let keys = |r: &EvaluationReport| -> Vec<String> {
        let v = serde_json::to_value(r).unwrap();
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        for rec in v["records"].as_array().unwrap() {
            k.extend(rec.as_object().unwrap().keys().map(|s| format!("record.{s}")));
        }
        k
    };
    assert_eq!(keys(&ra), keys(&rb));
}

#[test]
fn topics_with_two_and_one_topics() {
    let a = tempfile::tempdir().unwrap();
    let mut p = pipeline(a.path(), 5, "");
    p.config.lda.num_topics = 2;
    p.ingest().unwrap();
    p.prep().unwrap();
    let m2 = p.topics().unwrap();
    let first: Vec<String> = top_keywords(&m2, 0, 10).unwrap().into_iter().map(|k| k.0).collect();
    let second: Vec<String> = top_keywords(&m2, 1, 10).unwrap().into_iter().map(|k| k.0).collect();
    assert!(first.iter().all(|w| !second.contains(w)), "{first:?} / {second:?}");

    let theta_a = fs::read(a.path().join("out").join("theta.csv")).unwrap();
    let model_a = fs::read(a.path().join("out").join("topic_model.json")).unwrap();
    p.topics().unwrap();
    assert_eq!(fs::read(a.path().join("out").join("theta.csv")).unwrap(), theta_a);
    assert_eq!(fs::read(a.path().join("out").join("topic_model.json")).unwrap(), model_a);

    p.config.lda.num_topics = 1;
    let m1: TopicModel = p.topics().unwrap();
    assert!(m1.theta.iter().all(|row| row == &[1.0]));
}

#[test]
fn artifacts_round_trip_for_every_model_kind() {
    let a = tempfile::tempdir().unwrap();
    let mut p = pipeline(a.path(), 9, "");
    p.ingest().unwrap();
    p.prep().unwrap();
    p.topics().unwrap();
    let table = p.features().unwrap();
    let rows: Vec<usize> = (0..30).collect();
    let specs = [
        ModelSpec::Linear,
        ModelSpec::Knn { k: 3 },
        ModelSpec::Boosted(BoostParams { num_iterations: 30, depth: 3, ..BoostParams::default() }),
    ];
    for spec in specs {
        let (model, scaler) = fit_on_rows(&spec, &table, &rows).unwrap();
        let scaled = apply_scaler(table.x.view(), &scaler).unwrap();
        let in_memory = model.predict(scaled.view()).unwrap();
        let artifact = ModelArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            spec: spec.clone(),
            columns: table.columns.clone(),
            num_topics: 3,
            encoder: table.encoder.clone(),
            scaler,
            model,
            seed: 9,
        };
        let loaded = ModelArtifact::from_json(&artifact.to_json()).unwrap();
        assert_eq!(loaded, artifact);
        assert_eq!(loaded.predict_raw(&table.x).unwrap(), in_memory, "{spec:?}");
    }
}

#[test]
fn persisted_model_reproduces_training_predictions() {
    let a = tempfile::tempdir().unwrap();
    let mut p = pipeline(a.path(), 4, "");
    p.run_all().unwrap();
    let out = a.path().join("out");
    let table: FeatureTable = serde_json::from_str(&fs::read_to_string(out.join(FEATURES_JSON)).unwrap()).unwrap();
    let linear = out.join("model_linear_regression.json");
    let art = ModelArtifact::from_json(&fs::read_to_string(&linear).unwrap()).unwrap();
    let expected = art.model.predict(apply_scaler(table.x.view(), &art.scaler).unwrap().view()).unwrap();

    // features.csv carries director_code instead of the name
    let (n, warnings) = predict_file(&linear, &out.join("features.csv"), Some(&a.path().join("p.csv"))).unwrap();
    assert_eq!(n, 40);
    assert!(warnings.is_empty());
    let text = fs::read_to_string(a.path().join("p.csv")).unwrap();
    let got: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(got, expected);
    assert!(out.join(MODEL_JSON).is_file());
}

#[test]
fn unknown_director_and_schema_checks() {
    let a = tempfile::tempdir().unwrap();
    let mut p = pipeline(a.path(), 4, "");
    p.ingest().unwrap();
    p.prep().unwrap();
    p.topics().unwrap();
    let table = p.features().unwrap();
    let (model, scaler) = fit_on_rows(&ModelSpec::Linear, &table, &(0..40).collect::<Vec<_>>()).unwrap();
    let art = ModelArtifact {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        spec: ModelSpec::Linear,
        columns: table.columns.clone(),
        num_topics: 3,
        encoder: table.encoder.clone(),
        scaler,
        model,
        seed: 4,
    };
    let csv = "episode_id,topic_0,topic_1,topic_2,director,viewers_millions,review_count\nX,0.7,0.2,0.1,Zzz New,2.0,1800\n";
    let input = read_predict_input(&art, csv.as_bytes()).unwrap();
    assert_eq!(input.warnings.len(), 1);
    let unknown = art.encoder.unknown_code() as f64;
    assert_eq!(input.x[[0, 4]], unknown);
    assert_eq!(input.x[[0, 3]], 0.0);
    assert!(art.predict_raw(&input.x).unwrap()[0].is_finite());

    let mut v: serde_json::Value = serde_json::from_str(&art.to_json()).unwrap();
    v["schema_version"] = serde_json::json!(99);
    assert_eq!(
        ModelArtifact::from_json(&v.to_string()).unwrap_err(),
        ArtifactError::SchemaVersionMismatch { expected: ARTIFACT_SCHEMA_VERSION, found: 99 }
    );
}

#[test]
fn html_snapshots_feed_the_arrow_schema_fixture() {
    let a = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&fixture("arrow_schema").join("pipeline.toml")).unwrap();
    let mut p = Pipeline::new(cfg, a.path().join("out"), true).unwrap();
    let ds = p.ingest().unwrap();
    assert_eq!(ds.records.len(), 165);
    let html = ds.source_manifest.iter().filter(|s| s.kind == episode_rating::ingest::SourceKind::HtmlSnapshot).count();
    assert_eq!(html, 8);
    let names: std::collections::BTreeSet<&str> = ds.records.iter().map(|r| r.director_name.as_str()).collect();
    assert_eq!(names.len(), 51);
}
