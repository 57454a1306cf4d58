#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_episode-rating"))
}

pub fn run_bin(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

/// A config over the mini fixture with a small LDA run and small grids.
pub fn quick_config(dir: &Path, seed: u64, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = {seed}
data_dir = "{data}"

[lda]
num_topics = 3
iterations = 120
burn_in = 60

[models]
knn_k = [1, 3, 5]
boost_learning_rate = [0.1]
boost_depth = [2, 4]
boost_l2_leaf_reg = [3.0]
boost_num_iterations = 40

[cv]
folds = 5
{extra}
"#,
        data = fixture("mini").display()
    );
    let path = dir.join("pipeline.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Every file under `dir` (relative path → bytes), except `skip`.
pub fn snapshot(dir: &Path, skip: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if path.is_file() && !skip.contains(&name.as_str()) {
            out.insert(name, fs::read(&path).unwrap());
        }
    }
    out
}
