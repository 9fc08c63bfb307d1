//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bae_core::autoencoder::{loss_binary, loss_tree, Aggregation, BinaryDecoderParams, EncoderParams};
use bae_core::bilingual::{correlation, Instance, ModelShape, ObjectiveConfig};
use bae_core::classifier::{cross_lingual_eval, perceptron_train, EvalConfig, DEFAULT_EPOCHS};
use bae_core::corpus::{tokenize, AlignedPair, BagOfWords};
use bae_core::gradcheck::check_gradients;
use bae_core::math::{Nonlinearity, WordMatrix};
use bae_core::model_io::{from_bytes, load_model, to_bytes};
use bae_core::synth::{generate, translation_recovery, SynthConfig, SynthCorpus};
use bae_core::train::{prepare_corpus, PreparedCorpus};
use bae_core::tree::WordTree;
use bae_core::{train, BilingualModel, TrainConfig, Variant};
use common::{bae, core_golden, format_mismatches, p};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, Box<dyn FnMut(&mut Shared) -> Check>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Shared {
    corpus: SynthCorpus,
    prepared: PreparedCorpus,
    models: HashMap<&'static str, BilingualModel>,
}

impl Shared {
    fn new() -> Self {
        let corpus = generate(&SynthConfig::default()).unwrap();
        let none: Vec<String> = Vec::new();
        let prepared = prepare_corpus(&corpus.src, &corpus.tgt, &none, &none, None, 1).unwrap();
        Shared {
            corpus,
            prepared,
            models: HashMap::new(),
        }
    }

    /// Binary variant at D=16, 20 epochs, merge 5, with the given lambda.
    fn model(&mut self, tag: &'static str, lambda: f64) -> &BilingualModel {
        let data = &self.prepared.data;
        self.models.entry(tag).or_insert_with(|| {
            let cfg = TrainConfig {
                dim: 16,
                epochs: 20,
                merge_k: 5,
                lambda,
                ..Default::default()
            };
            train(data, &cfg).unwrap().0
        })
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_bag(rng: &mut ChaCha8Rng, vocab: usize) -> BagOfWords {
    let n = rng.gen_range(1..=4);
    BagOfWords::from_counts((0..n).map(|_| (rng.gen_range(0..vocab), rng.gen_range(1..=3))))
}

fn c1_gradients() -> Check {
    let (vx, vy, dim) = (10, 12, 4);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    let mut seed = 0;
    for variant in [Variant::Binary, Variant::Tree] {
        for nl in [Nonlinearity::Sigmoid, Nonlinearity::Tanh] {
            for tied in [false, true] {
                if tied && variant == Variant::Tree {
                    continue;
                }
                for lambda in [0.0, 1.0] {
                    seed += 1;
                    let shape = ModelShape {
                        dim,
                        vocab_x: vx,
                        vocab_y: vy,
                        variant,
                        nonlinearity: nl,
                        aggregation: Aggregation::Sum,
                        tied,
                    };
                    let words = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect();
                    let mut m = BilingualModel::init(shape, seed, words("x", vx), words("y", vy)).unwrap();
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                    for (_, g) in m.params.groups_mut() {
                        let v = uniform(&mut rng, g.len(), 0.5);
                        g.copy_from_slice(&v);
                    }
                    let inst: Vec<Instance> = (0..3)
                        .map(|_| Instance::Pair(AlignedPair::new(random_bag(&mut rng, vx), random_bag(&mut rng, vy))))
                        .collect();
                    let cfg = ObjectiveConfig { lambda, cross_only: false };
                    let r = check_gradients(&m, &inst, &cfg, 1e-5, 1e-3).map_err(|e| e.to_string())?;
                    ensure(
                        r.max_rel_error < 1e-5,
                        format!("{variant:?}/{nl:?}/tied={tied}/lambda={lambda}: {:.2e} at {:?}", r.max_rel_error, r.worst),
                    )?;
                    worst = worst.max(r.max_rel_error);
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} configurations, max relative error {worst:.2e}"))
}

fn c2_tree_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for v in [2, 3, 4, 16, 31, 100] {
        let dim = 5;
        let mut t = WordTree::new(v, dim, rng.gen()).map_err(|e| e.to_string())?;
        t.node_bias = uniform(&mut rng, v - 1, 2.0);
        t.node_weight = WordMatrix::from_columns(dim, v - 1, uniform(&mut rng, dim * (v - 1), 2.0));
        for _ in 0..20 {
            let phi = uniform(&mut rng, dim, 3.0);
            let total: f64 = (0..v).map(|w| t.word_prob(w, &phi)).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    ensure(worst < 1e-9, format!("max |sum - 1| = {worst:.2e}"))?;
    Ok(format!("max |sum - 1| = {worst:.2e}"))
}

fn c3_anchors() -> Check {
    let mut worst: f64 = 0.0;
    for v in [1usize, 4, 7, 50] {
        let enc = EncoderParams::zeros(3, v).unwrap();
        let dec = BinaryDecoderParams::untied(3, v);
        let bag = BagOfWords::from_counts([(0, 2), (v - 1, 1)]);
        let l = loss_binary(&bag, &enc, &dec).map_err(|e| e.to_string())?;
        worst = worst.max((l - v as f64 * LN_2).abs());
    }
    for m in [1u32, 3, 10] {
        let enc = EncoderParams::zeros(3, 4).unwrap();
        let tree = WordTree::new(4, 3, 9).unwrap();
        let bag = BagOfWords::from_counts([(1, m)]);
        let l = loss_tree(&bag, &enc, &tree).map_err(|e| e.to_string())?;
        worst = worst.max((l - m as f64 * 4f64.ln()).abs());
        let spread = BagOfWords::from_counts([(0, 1), (2, m)]);
        let l = loss_tree(&spread, &enc, &tree).map_err(|e| e.to_string())?;
        worst = worst.max((l - (m + 1) as f64 * 4f64.ln()).abs());
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:.2e}"))?;
    Ok(format!("max deviation {worst:.2e}"))
}

fn pearson_sum(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let b = x.len() as f64;
    (0..x[0].len())
        .map(|d| {
            let mx = x.iter().map(|r| r[d]).sum::<f64>() / b;
            let my = y.iter().map(|r| r[d]).sum::<f64>() / b;
            let cov = x.iter().zip(y).map(|(a, c)| (a[d] - mx) * (c[d] - my)).sum::<f64>() / b;
            let sx = (x.iter().map(|r| (r[d] - mx).powi(2)).sum::<f64>() / b).sqrt();
            let sy = (y.iter().map(|r| (r[d] - my).powi(2)).sum::<f64>() / b).sqrt();
            cov / ((sx + 1e-8) * (sy + 1e-8))
        })
        .sum()
}

fn c4_correlation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (b, d) = (8, 6);
    let mut worst: f64 = 0.0;
    let mut self_worst: f64 = 0.0;
    for _ in 0..50 {
        let mut rows = || -> Vec<Vec<f64>> { (0..b).map(|_| uniform(&mut rng, d, 1.0)).collect() };
        let (x, y) = (rows(), rows());
        let r = correlation(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((r - pearson_sum(&x, &y)).abs());
        let neg: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        self_worst = self_worst.max((correlation(&x, &x).unwrap() - d as f64).abs());
        self_worst = self_worst.max((correlation(&x, &neg).unwrap() + d as f64).abs());
    }
    ensure(worst < 1e-10, format!("oracle deviation {worst:.2e}"))?;
    ensure(self_worst < 1e-6, format!("self/anti deviation {self_worst:.2e}"))?;
    Ok(format!("oracle deviation {worst:.2e}, self/anti deviation {self_worst:.2e}"))
}

fn c5_training(shared: &mut Shared) -> Check {
    let data = &shared.prepared.data;
    let mut notes = Vec::new();
    for variant in [Variant::Binary, Variant::Tree] {
        let base = TrainConfig {
            epochs: 10,
            variant,
            ..Default::default()
        };
        let clock = Instant::now();
        let (_, plain) = train(data, &TrainConfig { lambda: 0.0, ..base.clone() }).map_err(|e| e.to_string())?;
        let (first, tenth) = (plain.epochs[0].mean_total, plain.epochs[9].mean_total);
        ensure(tenth < first, format!("{variant:?} lambda=0: loss {first} -> {tenth}"))?;
        let (_, corr) = train(data, &base).map_err(|e| e.to_string())?;
        let c0 = corr.epochs[0].mean_correlation.unwrap();
        let c1 = corr.last().unwrap().mean_correlation.unwrap();
        ensure(c1 > c0, format!("{variant:?} lambda=4: correlation {c0} -> {c1}"))?;
        let secs = clock.elapsed().as_secs_f64() / 2.0;
        ensure(secs < 120.0, format!("{variant:?}: {secs:.1}s per run"))?;
        notes.push(format!("{variant:?} loss {first:.2}->{tenth:.2}, corr {c0:.2}->{c1:.2} ({secs:.1}s/run)"));
    }
    Ok(notes.join("; "))
}

/// Ranks target words by Dice coefficient of sentence co-occurrence.
fn cooccurrence_baseline(c: &SynthCorpus) -> (usize, usize) {
    let index = |words: &[String]| -> HashMap<String, usize> { words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect() };
    let (ix, iy) = (index(&c.words_x), index(&c.words_y));
    let (vx, vy) = (c.words_x.len(), c.words_y.len());
    let mut co = vec![vec![0f64; vy]; vx];
    let (mut dx, mut dy) = (vec![0f64; vx], vec![0f64; vy]);
    for (s, t) in c.src.iter().zip(&c.tgt) {
        let mut xs: Vec<usize> = tokenize(s).iter().filter_map(|w| ix.get(w).copied()).collect();
        let mut ys: Vec<usize> = tokenize(t).iter().filter_map(|w| iy.get(w).copied()).collect();
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        xs.iter().for_each(|&i| dx[i] += 1.0);
        ys.iter().for_each(|&j| dy[j] += 1.0);
        for &i in &xs {
            for &j in &ys {
                co[i][j] += 1.0;
            }
        }
    }
    let (mut r1, mut r5) = (0, 0);
    for i in 0..vx {
        let mut ranked: Vec<(f64, usize)> = (0..vy).map(|j| (2.0 * co[i][j] / (dx[i] + dy[j]).max(1.0), j)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let gold = c.translation[i];
        r1 += (ranked[0].1 == gold) as usize;
        r5 += ranked[..5].iter().any(|r| r.1 == gold) as usize;
    }
    (r1, r5)
}

fn c6_translation(shared: &mut Shared) -> Check {
    let clock = Instant::now();
    let model = shared.model("cr/corr", 4.0).clone();
    let r = translation_recovery(&model, &shared.corpus).map_err(|e| e.to_string())?;
    let secs = clock.elapsed().as_secs_f64();
    let (b1, b5) = cooccurrence_baseline(&shared.corpus);
    let n = r.words as f64;
    let detail = format!(
        "rank-1 {}/{}, rank-5 {}/{} (co-occurrence baseline {b1}/{}, {b5}/{}; {secs:.1}s)",
        r.rank1, r.words, r.rank5, r.words, r.words, r.words
    );
    ensure(r.rank1 as f64 >= 0.8 * n && r.rank5 as f64 >= 0.95 * n, detail.clone())?;
    ensure(secs < 180.0, detail.clone())?;
    Ok(detail)
}

fn c7_transfer(shared: &mut Shared) -> Check {
    let clock = Instant::now();
    let corr = shared.model("cr/corr", 4.0).clone();
    let plain = shared.model("cr", 0.0).clone();
    let c = &shared.corpus;
    let cfg = EvalConfig {
        train_size: 100,
        ..Default::default()
    };
    let run = |m: &BilingualModel| cross_lingual_eval(m, &c.train_x, bae_core::Lang::X, &c.test_y, bae_core::Lang::Y, &cfg);
    let a = run(&corr).map_err(|e| e.to_string())?;
    let b = run(&plain).map_err(|e| e.to_string())?;
    let secs = clock.elapsed().as_secs_f64();
    let margin = a.accuracy - a.majority_baseline;
    let detail = format!(
        "X->Y accuracy cr/corr {:.3}, cr {:.3}, majority {:.3}, margin {:.1} points ({secs:.1}s)",
        a.accuracy,
        b.accuracy,
        a.majority_baseline,
        100.0 * margin
    );
    ensure(margin >= 0.20 && a.accuracy >= b.accuracy && secs < 300.0, detail.clone())?;
    Ok(detail)
}

/// Plain multi-class perceptron with per-visit weight averaging, examples in
/// the given order.
fn naive_perceptron(examples: &[(Vec<f64>, usize)], classes: usize, epochs: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = examples[0].0.len() + 1;
    let mut w = vec![vec![0.0; d]; classes];
    let mut sum = vec![vec![0.0; d]; classes];
    let mut visits = 0.0;
    for _ in 0..epochs {
        for (x, y) in examples {
            let xa: Vec<f64> = x.iter().copied().chain([1.0]).collect();
            let scores: Vec<f64> = w.iter().map(|wc| wc.iter().zip(&xa).map(|(a, b)| a * b).sum()).collect();
            let mut pred = 0;
            for (k, s) in scores.iter().enumerate() {
                if *s > scores[pred] {
                    pred = k;
                }
            }
            if pred != *y {
                for j in 0..d {
                    w[*y][j] += xa[j];
                    w[pred][j] -= xa[j];
                }
            }
            for (s, wc) in sum.iter_mut().zip(&w) {
                s.iter_mut().zip(wc).for_each(|(a, b)| *a += b);
            }
            visits += 1.0;
        }
    }
    let avg = sum.iter().map(|s| s.iter().map(|v| v / visits).collect()).collect();
    (w, avg)
}

fn c8_perceptron() -> Check {
    let m = perceptron_train(&[(vec![1.0], "A"), (vec![-1.0], "B")], 1, None).map_err(|e| e.to_string())?;
    ensure(m.weights == [[1.0, -1.0], [-1.0, 1.0]], format!("raw weights {:?}", m.weights))?;
    ensure(m.averaged_weights == [[0.5, -0.5], [-0.5, 0.5]], format!("averaged weights {:?}", m.averaged_weights))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut separable = Vec::new();
    while separable.len() < 50 {
        let x = uniform(&mut rng, 3, 2.0);
        let margin = x[0] - 0.7 * x[1] + 0.3 * x[2] - 0.2;
        if margin.abs() > 0.3 {
            separable.push((x, if margin > 0.0 { "pos" } else { "neg" }));
        }
    }
    let m = perceptron_train(&separable, DEFAULT_EPOCHS, None).map_err(|e| e.to_string())?;
    let correct = separable.iter().filter(|(x, l)| m.classes[m.predict_raw_index(x)] == *l).count();
    ensure(correct == 50, format!("separable set: {correct}/50 after {DEFAULT_EPOCHS} epochs"))?;

    let mut oracle_checks = 0;
    for trial in 0..20 {
        let k = 2 + trial % 3;
        let ex: Vec<(Vec<f64>, usize)> = (0..15).map(|i| (uniform(&mut rng, 2, 1.0), i % k)).collect();
        let labelled: Vec<(Vec<f64>, String)> = ex.iter().map(|(x, y)| (x.clone(), format!("k{y}"))).collect();
        let m = perceptron_train(&labelled, 3, None).map_err(|e| e.to_string())?;
        let (w, avg) = naive_perceptron(&ex, k, 3);
        let close = |a: &[Vec<f64>], b: &[Vec<f64>]| a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-12);
        ensure(close(&m.weights, &w) && close(&m.averaged_weights, &avg), format!("trial {trial} differs from naive oracle"))?;
        oracle_checks += 1;
    }
    Ok(format!("hand trace exact, separable 50/50, {oracle_checks} random sets match the naive oracle"))
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let corpus = d.join("corpus");
    bae(&["gen-synth", "--out", p(&corpus), "--pairs", "300", "--train-docs", "50", "--test-docs", "50"]).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for run in ["a.bae", "b.bae"] {
        let out = d.join(run);
        bae(&[
            "train",
            "--src", p(&corpus.join("pairs.x.txt")),
            "--tgt", p(&corpus.join("pairs.y.txt")),
            "--dim", "8", "--epochs", "3", "--threads", "1",
            "--out", p(&out),
        ])
        .map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(bytes[0] == bytes[1], "two identical training runs produced different model files")?;
    let model = load_model(&d.join("a.bae")).map_err(|e| e.to_string())?;
    ensure(to_bytes(&model) == bytes[0], "save/load round trip is not exact")?;
    ensure(from_bytes(&to_bytes(&model)).map_err(|e| e.to_string())? == model, "reloaded model differs")?;

    for name in ["binary_tanh.bae", "tree_sigmoid.bae"] {
        let golden = std::fs::read(core_golden(name)).map_err(|e| e.to_string())?;
        let m = from_bytes(&golden).map_err(|e| format!("{name}: {e}"))?;
        ensure(to_bytes(&m) == golden, format!("{name} does not re-serialize identically"))?;
    }
    let emb = d.join("emb.txt");
    bae(&["export", "--model", p(&core_golden("binary_tanh.bae")), "--out", p(&emb)]).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&emb).map_err(|e| e.to_string())?;
    ensure(text == "2 2\na 0.5 -0.25\nb 1 2\n", format!("embedding export {text:?}"))?;
    let bad = format_mismatches();
    ensure(bad.is_empty(), format!("golden mismatches: {bad:?}"))?;
    Ok("identical model files, exact round trip, model/embedding/CSV/TSV/JSON goldens match".into())
}

fn c10_sweeps() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let corpus = d.join("corpus");
    bae(&["gen-synth", "--out", p(&corpus), "--pairs", "400"]).map_err(|e| e.to_string())?;
    let f = |n: &str| corpus.join(n);
    let model = d.join("m.bae");
    let (src, tgt) = (f("pairs.x.txt"), f("pairs.y.txt"));
    bae(&["train", "--src", p(&src), "--tgt", p(&tgt), "--dim", "8", "--epochs", "2", "--out", p(&model)]).map_err(|e| e.to_string())?;

    let sizes = d.join("sizes.csv");
    bae(&[
        "sweep-trainsize",
        "--model", p(&model),
        "--train-docs", p(&f("train.x.tsv")),
        "--test-docs", p(&f("test.y.tsv")),
        "--out", p(&sizes),
    ])
    .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&sizes).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let listed: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    ensure(listed == ["100", "200", "500", "1000", "5000", "10000"], format!("train-size rows {listed:?}"))?;

    let merges = d.join("merge.csv");
    bae(&[
        "sweep-merge",
        "--src", p(&src), "--tgt", p(&tgt),
        "--train-x", p(&f("train.x.tsv")), "--test-x", p(&f("test.x.tsv")),
        "--train-y", p(&f("train.y.tsv")), "--test-y", p(&f("test.y.tsv")),
        "--dim", "8", "--epochs", "2",
        "--out", p(&merges),
    ])
    .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&merges).map_err(|e| e.to_string())?;
    let runs: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let ks: Vec<&str> = runs.iter().map(|r| r[0]).collect();
    ensure(ks == ["5", "25", "50"], format!("merge runs {ks:?}"))?;
    let cells = runs.iter().filter(|r| r.len() == 4 && r[2].parse::<f64>().is_ok() && r[3].parse::<f64>().is_ok()).count();
    ensure(cells == 3, "merge rows lack two direction accuracies")?;
    Ok(format!("{} train-size rows, {} merge runs x 2 directions", rows.len(), runs.len()))
}

fn main() {
    let mut shared = Shared::new();
    let criteria: Vec<Criterion> = vec![
        ("1 gradient correctness", Duration::from_secs(10), Box::new(|_| c1_gradients())),
        ("2 tree normalization", Duration::from_secs(5), Box::new(|_| c2_tree_normalization())),
        ("3 analytic anchors", Duration::from_secs(5), Box::new(|_| c3_anchors())),
        ("4 correlation oracle", Duration::from_secs(5), Box::new(|_| c4_correlation())),
        ("5 training sanity", Duration::from_secs(480), Box::new(c5_training)),
        ("6 translation recovery", Duration::from_secs(180), Box::new(c6_translation)),
        ("7 cross-lingual transfer", Duration::from_secs(300), Box::new(c7_transfer)),
        ("8 perceptron oracle", Duration::from_secs(5), Box::new(|_| c8_perceptron())),
        ("9 determinism and serialization", Duration::from_secs(60), Box::new(|_| c9_determinism())),
        ("10 sweep shapes", Duration::from_secs(120), Box::new(|_| c10_sweeps())),
    ];
    let mut failed = 0;
    for (name, limit, mut check) in criteria {
        let clock = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut shared))).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = clock.elapsed();
        let result = result.and_then(|d| {
            if elapsed <= limit {
                Ok(d)
            } else {
                Err(format!("{d}; took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
            }
        });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
