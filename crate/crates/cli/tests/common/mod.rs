#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bae_cli::output::{self, MergeRow, TrainsizeRow};
use bae_core::classifier::EvalResult;
use bae_core::embeddings::Neighbor;
use bae_core::train::EpochStats;

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

pub fn core_golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name)
}

fn epoch(epoch: usize, l: [f64; 5], mono_x: Option<f64>, corr: Option<f64>, objective: f64) -> EpochStats {
    EpochStats {
        epoch,
        mean_lx: l[0],
        mean_ly: l[1],
        mean_lxy: l[2],
        mean_lyx: l[3],
        mean_total: l[4],
        mean_mono_x: mono_x,
        mean_mono_y: None,
        mean_correlation: corr,
        objective,
        updates: 4,
        seconds: 12.0,
    }
}

fn eval_result() -> EvalResult {
    EvalResult {
        accuracy: 0.5,
        n_test: 2,
        classes: vec!["c0".into(), "c1".into()],
        confusion: vec![vec![1, 0], vec![1, 0]],
        majority_class: "c0".into(),
        majority_baseline: 0.5,
        predictions: vec![("c0".into(), "c0".into()), ("c1".into(), "c0".into())],
        empty_test_docs: 0,
    }
}

/// Renders fixed inputs with every text writer and compares against the
/// checked-in files. Returns the names that differ.
pub fn format_mismatches() -> Vec<&'static str> {
    let rendered = [
        (
            "curves.csv",
            output::curves_csv(&[
                epoch(1, [1.5, 2.25, 3.0, 0.125, 6.875], Some(0.5), Some(3.75), -2.5),
                epoch(2, [1.0, 1.0, 1.0, 1.0, 4.0], None, None, 4.0),
            ]),
        ),
        (
            "neighbors.tsv",
            output::neighbors_tsv(&[
                Neighbor { word: "b".into(), index: 1, distance: 0.0 },
                Neighbor { word: "c".into(), index: 2, distance: 1.0 / 3.0 },
            ]),
        ),
        ("predictions.tsv", output::predictions_tsv(&eval_result())),
        ("metrics.json", output::metrics_json(&eval_result(), serde_json::json!({ "seed": 1 }))),
        (
            "trainsize.csv",
            output::trainsize_csv(&[
                TrainsizeRow { train_size: 100, result: Ok((0.75, 0.25)) },
                TrainsizeRow { train_size: 5000, result: Err("skipped: exceeds pool of 1000 documents".into()) },
            ]),
        ),
        (
            "merge.csv",
            output::merge_csv(&[
                MergeRow { merge_k: 5, seed: 1, x_to_y: 0.875, y_to_x: 0.5 },
                MergeRow { merge_k: 25, seed: 1, x_to_y: 1.0, y_to_x: 0.25 },
            ]),
        ),
        ("doc_vectors.tsv", output::doc_vectors_tsv(&[vec![0.5, -1.0], vec![0.0, 1e-12]])),
    ];
    rendered.into_iter().filter(|(name, text)| golden(name) != *text).map(|(name, _)| name).collect()
}

/// Runs the CLI in-process.
pub fn bae(args: &[&str]) -> Result<bae_cli::Outcome, bae_cli::CliError> {
    bae_cli::run(["--quiet"].iter().chain(args).copied())
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
