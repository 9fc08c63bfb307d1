//! Averaged multi-class perceptron and the train-on-X, test-on-Y harness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bilingual::{BilingualModel, Lang};
use crate::corpus::{compute_tfidf_sized, to_bow, tokenize, BagOfWords, LabeledDoc, TfIdfStats};
use crate::embeddings::{doc_vector, EmbeddingTable};
use crate::error::{Error, Result};

pub const DEFAULT_EPOCHS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronModel {
    /// Sorted label list; index order is the tie-break order.
    pub classes: Vec<String>,
    /// Per class, `D + 1` values with the bias last.
    pub weights: Vec<Vec<f64>>,
    pub averaged_weights: Vec<Vec<f64>>,
}

fn score(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut s = w[d];
    for k in 0..d {
        s += w[k] * x[k];
    }
    s
}

fn argmax(ws: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = score(&ws[0], x);
    for (c, w) in ws.iter().enumerate().skip(1) {
        let s = score(w, x);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

/// `seed = None` visits the examples in the given order every epoch.
pub fn perceptron_train<S: AsRef<str>>(examples: &[(Vec<f64>, S)], epochs: usize, seed: Option<u64>) -> Result<PerceptronModel> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    let Some((first, _)) = examples.first() else {
        return Err(Error::invalid("no training examples"));
    };
    let dim = first.len();
    if examples.iter().any(|(x, _)| x.len() != dim) {
        return Err(Error::Shape("training vectors differ in length".into()));
    }
    let mut classes: Vec<String> = examples.iter().map(|(_, l)| l.as_ref().to_owned()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("perceptron needs at least 2 classes"));
    }
    let labels: Vec<usize> = examples
        .iter()
        .map(|(_, l)| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).unwrap())
        .collect();

    let mut weights = vec![vec![0.0; dim + 1]; classes.len()];
    let mut sums = weights.clone();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut visits = 0u64;
    for epoch in 0..epochs {
        if let Some(seed) = seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let x = &examples[i].0;
            let gold = labels[i];
            let pred = argmax(&weights, x);
            if pred != gold {
                for k in 0..dim {
                    weights[gold][k] += x[k];
                    weights[pred][k] -= x[k];
                }
                weights[gold][dim] += 1.0;
                weights[pred][dim] -= 1.0;
            }
            for (s, w) in sums.iter_mut().zip(&weights) {
                for (a, b) in s.iter_mut().zip(w) {
                    *a += b;
                }
            }
            visits += 1;
        }
    }
    let n = visits as f64;
    let averaged_weights = sums.into_iter().map(|s| s.into_iter().map(|v| v / n).collect()).collect();
    Ok(PerceptronModel {
        classes,
        weights,
        averaged_weights,
    })
}

impl PerceptronModel {
    pub fn dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.averaged_weights, x)
    }

    /// Prediction from the final, non-averaged weights.
    pub fn predict_raw_index(&self, x: &[f64]) -> usize {
        argmax(&self.weights, x)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }
}

pub fn predict<'a>(m: &'a PerceptronModel, x: &[f64]) -> &'a str {
    &m.classes[m.predict_index(x)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub n_test: usize,
    pub classes: Vec<String>,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub majority_class: String,
    pub majority_baseline: f64,
    pub predictions: Vec<(String, String)>,
    /// Test documents with no in-vocabulary word.
    pub empty_test_docs: usize,
}

/// Scores predictions of `m` on labelled vectors. The majority baseline
/// always predicts `majority_class`.
pub fn evaluate<S: AsRef<str>>(m: &PerceptronModel, test: &[(Vec<f64>, S)], majority_class: &str) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let k = m.classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut predictions = Vec::with_capacity(test.len());
    let mut majority_hits = 0usize;
    for (x, label) in test {
        let label = label.as_ref();
        let gold = m
            .class_index(label)
            .ok_or_else(|| Error::invalid(format!("test label {label:?} not among training labels")))?;
        if x.len() != m.dim() {
            return Err(Error::Shape("test vector length differs from model".into()));
        }
        let pred = m.predict_index(x);
        confusion[gold][pred] += 1;
        predictions.push((label.to_owned(), m.classes[pred].clone()));
        majority_hits += (label == majority_class) as usize;
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let n = test.len();
    Ok(EvalResult {
        accuracy: correct as f64 / n as f64,
        n_test: n,
        classes: m.classes.clone(),
        confusion,
        majority_class: majority_class.to_owned(),
        majority_baseline: majority_hits as f64 / n as f64,
        predictions,
        empty_test_docs: 0,
    })
}

/// Indices of a class-proportional subsample of size `size`, with
/// largest-remainder rounding (ties to the earlier class).
pub fn stratified_sample<S: AsRef<str>>(labels: &[S], size: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if size > n {
        return Err(Error::invalid(format!("train size {size} exceeds the {n} available documents")));
    }
    let mut classes: Vec<&str> = labels.iter().map(|l| l.as_ref()).collect();
    classes.sort();
    classes.dedup();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, l) in labels.iter().enumerate() {
        members[classes.binary_search(&l.as_ref()).unwrap()].push(i);
    }
    let mut quota: Vec<usize> = members.iter().map(|m| m.len() * size / n).collect();
    let mut rem: Vec<(usize, usize)> = members.iter().enumerate().map(|(c, m)| (m.len() * size % n, c)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = size - quota.iter().sum::<usize>();
    for &(_, c) in rem.iter().take(short) {
        quota[c] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(size);
    for (m, q) in members.iter_mut().zip(quota) {
        m.shuffle(&mut rng);
        out.extend_from_slice(&m[..q]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Most frequent label, ties to the lexicographically smallest.
pub fn majority_label<S: AsRef<str>>(labels: &[S]) -> Option<String> {
    let mut sorted: Vec<&str> = labels.iter().map(|l| l.as_ref()).collect();
    sorted.sort();
    let mut best: Option<(&str, usize)> = None;
    for group in sorted.chunk_by(|a, b| a == b) {
        if best.is_none_or(|(_, n)| group.len() > n) {
            best = Some((group[0], group.len()));
        }
    }
    best.map(|(l, _)| l.to_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train_size: usize,
    pub seed: u64,
    pub epochs: usize,
    pub l2_normalize: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_size: 100,
            seed: 1,
            epochs: DEFAULT_EPOCHS,
            l2_normalize: false,
        }
    }
}

fn bags(docs: &[LabeledDoc], table: &EmbeddingTable) -> Vec<BagOfWords> {
    docs.iter().map(|d| to_bow(&tokenize(&d.text), &table.vocab)).collect()
}

fn vectors(bags: &[BagOfWords], table: &EmbeddingTable, stats: &TfIdfStats, l2: bool) -> Result<Vec<Vec<f64>>> {
    bags.iter()
        .map(|b| {
            let mut v = doc_vector(b, table, stats)?.vector;
            if l2 {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
            }
            Ok(v)
        })
        .collect()
}

/// Trains on a subsample of `train_docs` in `train_lang` and tests on
/// `test_docs` in `test_lang`. Idf for each side comes from its own full
/// document pool.
pub fn cross_lingual_eval(
    model: &BilingualModel,
    train_docs: &[LabeledDoc],
    train_lang: Lang,
    test_docs: &[LabeledDoc],
    test_lang: Lang,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    let train_table = EmbeddingTable::from_model(model, train_lang)?;
    let test_table = EmbeddingTable::from_model(model, test_lang)?;

    let train_bags = bags(train_docs, &train_table);
    let train_idf = compute_tfidf_sized(&train_bags, train_table.len())?;
    let labels: Vec<&str> = train_docs.iter().map(|d| d.label.as_str()).collect();
    let picked = stratified_sample(&labels, cfg.train_size, cfg.seed)?;
    let sub_bags: Vec<BagOfWords> = picked.iter().map(|&i| train_bags[i].clone()).collect();
    let sub_vecs = vectors(&sub_bags, &train_table, &train_idf, cfg.l2_normalize)?;
    let examples: Vec<(Vec<f64>, &str)> = sub_vecs.into_iter().zip(picked.iter().map(|&i| labels[i])).collect();
    let perceptron = perceptron_train(&examples, cfg.epochs, Some(cfg.seed))?;
    let majority = majority_label(&examples.iter().map(|(_, l)| *l).collect::<Vec<_>>()).unwrap();

    let test_bags = bags(test_docs, &test_table);
    let test_idf = compute_tfidf_sized(&test_bags, test_table.len())?;
    let test_vecs = vectors(&test_bags, &test_table, &test_idf, cfg.l2_normalize)?;
    let test: Vec<(Vec<f64>, &str)> = test_vecs.into_iter().zip(test_docs.iter().map(|d| d.label.as_str())).collect();
    let mut result = evaluate(&perceptron, &test, &majority)?;
    result.empty_test_docs = test_bags.iter().filter(|b| b.is_empty()).count();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_traced_two_points() {
        let ex = vec![(vec![1.0], "A"), (vec![-1.0], "B")];
        let m = perceptron_train(&ex, 1, None).unwrap();
        assert_eq!(m.classes, ["A", "B"]);
        assert_eq!(m.weights, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert_eq!(m.averaged_weights, vec![vec![0.5, -0.5], vec![-0.5, 0.5]]);
        assert_eq!(predict(&m, &[2.0]), "A");
        assert_eq!(predict(&m, &[-2.0]), "B");
    }

    #[test]
    fn single_example_is_learned() {
        let ex = [(vec![0.3, -1.0], "z"), (vec![1.0, 1.0], "a")];
        let m = perceptron_train(&ex[..], 1, None).unwrap();
        assert_eq!(predict(&m, &[1.0, 1.0]), "a");
        let lone = perceptron_train(&[(vec![2.0], "b"), (vec![0.0], "a")], 1, None).unwrap();
        assert_eq!(lone.classes[lone.predict_raw_index(&[0.0])], "a");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(perceptron_train(&[(vec![1.0], "A"), (vec![2.0], "A")], 3, None).is_err());
        assert!(perceptron_train::<&str>(&[], 3, None).is_err());
        assert!(perceptron_train(&[(vec![1.0], "A"), (vec![2.0], "B")], 0, None).is_err());
        assert!(perceptron_train(&[(vec![1.0], "A"), (vec![2.0, 1.0], "B")], 1, None).is_err());
    }

    #[test]
    fn zero_weights_pick_first_class() {
        let m = PerceptronModel {
            classes: vec!["a".into(), "b".into(), "c".into()],
            weights: vec![vec![0.0; 3]; 3],
            averaged_weights: vec![vec![0.0; 3]; 3],
        };
        assert_eq!(predict(&m, &[5.0, -2.0]), "a");
    }

    #[test]
    fn stratified_quotas_use_largest_remainder() {
        let labels: Vec<&str> = ["a"; 5].into_iter().chain(["b"; 3]).chain(["c"; 2]).collect();
        let idx = stratified_sample(&labels, 4, 9).unwrap();
        let count = |l: &str| idx.iter().filter(|&&i| labels[i] == l).count();
        // exact shares 2.0, 1.2, 0.8
        assert_eq!((count("a"), count("b"), count("c")), (2, 1, 1));
        assert_eq!(stratified_sample(&labels, 10, 1).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(stratified_sample(&labels, 11, 1).is_err());
        assert_eq!(stratified_sample(&labels, 4, 9).unwrap(), idx);
    }

    #[test]
    fn majority_ties_go_to_smallest_label() {
        assert_eq!(majority_label(&["b", "a", "b", "a"]).unwrap(), "a");
        assert_eq!(majority_label(&["b", "a", "b"]).unwrap(), "b");
        assert_eq!(majority_label::<&str>(&[]), None);
    }

    #[test]
    fn evaluate_rejects_unknown_labels() {
        let m = perceptron_train(&[(vec![1.0], "A"), (vec![-1.0], "B")], 1, None).unwrap();
        assert!(evaluate(&m, &[(vec![1.0], "C")], "A").is_err());
        let r = evaluate(&m, &[(vec![1.0], "A"), (vec![-3.0], "B"), (vec![2.0], "B")], "B").unwrap();
        assert_eq!(r.confusion, vec![vec![1, 0], vec![1, 1]]);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.majority_baseline - 2.0 / 3.0).abs() < 1e-15);
    }

    fn separable(n: usize, seed: u64) -> Vec<(Vec<f64>, String)> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let margin = x[0] + 0.5 * x[1] - 0.25;
            if margin.abs() >= 0.5 {
                out.push((x, if margin > 0.0 { "pos" } else { "neg" }.to_owned()));
            }
        }
        out
    }

    #[test]
    fn separable_set_is_fit() {
        let data = separable(50, 3);
        let m = perceptron_train(&data, DEFAULT_EPOCHS, Some(4)).unwrap();
        let correct = data.iter().filter(|(x, l)| m.classes[m.predict_raw_index(x)] == *l).count();
        assert_eq!(correct, 50);
    }

    proptest! {
        #[test]
        fn deterministic_given_seed(seed in 0u64..1000, n in 4usize..30) {
            let data = separable(n, seed);
            if data.iter().any(|d| d.1 == "pos") && data.iter().any(|d| d.1 == "neg") {
                let a = perceptron_train(&data, 3, Some(seed)).unwrap();
                let b = perceptron_train(&data, 3, Some(seed)).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn positive_scaling_keeps_argmax_without_bias(
            w in proptest::collection::vec(-3.0f64..3.0, 6),
            x in proptest::collection::vec(-3.0f64..3.0, 2),
            s in 0.01f64..100.0,
        ) {
            let ws: Vec<Vec<f64>> = w.chunks(2).map(|c| vec![c[0], c[1], 0.0]).collect();
            let m = PerceptronModel {
                classes: vec!["a".into(), "b".into(), "c".into()],
                weights: ws.clone(),
                averaged_weights: ws,
            };
            let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
            let scores: Vec<f64> = m.averaged_weights.iter().map(|w| score(w, &x)).collect();
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            // skip near ties, where rounding may legitimately flip the order
            prop_assume!(sorted[2] - sorted[1] > 1e-9);
            prop_assert_eq!(m.predict_index(&x), m.predict_index(&scaled));
        }

        #[test]
        fn confusion_totals_match(seed in 0u64..500) {
            let data = separable(30, seed);
            prop_assume!(data.iter().any(|d| d.1 == "pos") && data.iter().any(|d| d.1 == "neg"));
            let m = perceptron_train(&data, 2, Some(seed)).unwrap();
            let r = evaluate(&m, &data, "neg").unwrap();
            let total: usize = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total, r.n_test);
            let trace: usize = (0..2).map(|c| r.confusion[c][c]).sum();
            prop_assert_eq!(trace as f64 / r.n_test as f64, r.accuracy);
        }

        #[test]
        fn relabeling_permutes_confusion(seed in 0u64..500) {
            let data = separable(30, seed);
            prop_assume!(data.iter().any(|d| d.1 == "pos") && data.iter().any(|d| d.1 == "neg"));
            // renaming pos->a, neg->z reverses the sorted class order
            let rename = |l: &str| if l == "pos" { "a" } else { "z" }.to_owned();
            let renamed: Vec<(Vec<f64>, String)> = data.iter().map(|(x, l)| (x.clone(), rename(l))).collect();
            let m1 = perceptron_train(&data, 2, Some(seed)).unwrap();
            let m2 = PerceptronModel {
                classes: vec!["a".into(), "z".into()],
                weights: vec![m1.weights[1].clone(), m1.weights[0].clone()],
                averaged_weights: vec![m1.averaged_weights[1].clone(), m1.averaged_weights[0].clone()],
            };
            let w = &m1.averaged_weights;
            prop_assume!(data.iter().all(|(x, _)| score(&w[0], x) != score(&w[1], x)));
            let r1 = evaluate(&m1, &data, "neg").unwrap();
            let r2 = evaluate(&m2, &renamed, "z").unwrap();
            prop_assert_eq!(r1.accuracy, r2.accuracy);
            prop_assert_eq!(r1.confusion[0][0], r2.confusion[1][1]);
            prop_assert_eq!(r1.confusion[0][1], r2.confusion[1][0]);
            prop_assert_eq!(r1.confusion[1][1], r2.confusion[0][0]);
        }
    }
}
