//! Text formats emitted by the commands.

use std::fmt::Write;

use bae_core::classifier::EvalResult;
use bae_core::embeddings::{format_sig9, Neighbor};
use bae_core::train::EpochStats;
use serde::Serialize;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curves_csv(epochs: &[EpochStats]) -> String {
    let mut s = String::from("epoch,mean_lx,mean_ly,mean_lxy,mean_lyx,mean_total,mean_mono_x,mean_mono_y,mean_correlation,objective,updates\n");
    for e in epochs {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.mean_lx,
            e.mean_ly,
            e.mean_lxy,
            e.mean_lyx,
            e.mean_total,
            opt(e.mean_mono_x),
            opt(e.mean_mono_y),
            opt(e.mean_correlation),
            e.objective,
            e.updates
        )
        .unwrap();
    }
    s
}

/// `rank<TAB>word<TAB>distance`, ranks from 1, no header.
pub fn neighbors_tsv(neighbors: &[Neighbor]) -> String {
    let mut s = String::new();
    for (r, n) in neighbors.iter().enumerate() {
        writeln!(s, "{}\t{}\t{}", r + 1, n.word, format_sig9(n.distance)).unwrap();
    }
    s
}

/// `doc_id<TAB>gold<TAB>pred`, with a header line.
pub fn predictions_tsv(result: &EvalResult) -> String {
    let mut s = String::from("doc_id\tgold\tpred\n");
    for (i, (gold, pred)) in result.predictions.iter().enumerate() {
        writeln!(s, "{i}\t{gold}\t{pred}").unwrap();
    }
    s
}

#[derive(Debug, Serialize)]
pub struct Metrics<'a, C: Serialize> {
    pub accuracy: f64,
    pub n_test: usize,
    pub majority_baseline: f64,
    pub majority_class: &'a str,
    pub classes: &'a [String],
    pub confusion: &'a [Vec<usize>],
    pub empty_test_docs: usize,
    pub config: C,
}

pub fn metrics_json<C: Serialize>(result: &EvalResult, config: C) -> String {
    let m = Metrics {
        accuracy: result.accuracy,
        n_test: result.n_test,
        majority_baseline: result.majority_baseline,
        majority_class: &result.majority_class,
        classes: &result.classes,
        confusion: &result.confusion,
        empty_test_docs: result.empty_test_docs,
        config,
    };
    let mut s = serde_json::to_string_pretty(&m).expect("metrics serialize");
    s.push('\n');
    s
}

pub struct TrainsizeRow {
    pub train_size: usize,
    pub result: Result<(f64, f64), String>,
}

pub fn trainsize_csv(rows: &[TrainsizeRow]) -> String {
    let mut s = String::from("train_size,accuracy,majority_baseline,note\n");
    for r in rows {
        match &r.result {
            Ok((acc, maj)) => writeln!(s, "{},{acc},{maj},", r.train_size).unwrap(),
            Err(note) => writeln!(s, "{},,,{}", r.train_size, note.replace(',', ";")).unwrap(),
        }
    }
    s
}

pub struct MergeRow {
    pub merge_k: usize,
    pub seed: u64,
    pub x_to_y: f64,
    pub y_to_x: f64,
}

pub fn merge_csv(rows: &[MergeRow]) -> String {
    let mut s = String::from("merge_k,seed,x_to_y,y_to_x\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.merge_k, r.seed, r.x_to_y, r.y_to_x).unwrap();
    }
    s
}

pub fn doc_vectors_tsv(vectors: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for (i, v) in vectors.iter().enumerate() {
        let cells: Vec<String> = v.iter().map(|x| format_sig9(*x)).collect();
        writeln!(s, "{i}\t{}", cells.join(" ")).unwrap();
    }
    s
}
