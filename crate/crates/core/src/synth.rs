//! Synthetic bilingual world with a known word translation, used for
//! desk-scale checks of the whole pipeline.
//!
//! Every source word has a home topic. A topic samples its home words
//! `topic_boost` times as often as the rest. Target sentences are
//! token-wise translations of source sentences, each token replaced by a
//! uniformly random target word with probability `noise`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bilingual::{BilingualModel, Lang};
use crate::corpus::{write_labeled, LabeledDoc};
use crate::embeddings::{nearest, EmbeddingTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub classes: usize,
    pub pairs: usize,
    pub noise: f64,
    pub seed: u64,
    pub train_docs: usize,
    pub test_docs: usize,
    pub sentence_len: (usize, usize),
    pub doc_len: (usize, usize),
    pub topic_boost: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 50,
            classes: 4,
            pairs: 2000,
            noise: 0.1,
            seed: 1,
            train_docs: 1000,
            test_docs: 1000,
            sentence_len: (5, 12),
            doc_len: (30, 60),
            topic_boost: 8.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocabulary size must be at least 2"));
        }
        if self.classes < 2 || self.classes > self.vocab_size {
            return Err(Error::invalid("classes must be between 2 and the vocabulary size"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid("noise must lie in [0, 1]"));
        }
        for (name, (lo, hi)) in [("sentence", self.sentence_len), ("document", self.doc_len)] {
            if lo == 0 || lo > hi {
                return Err(Error::invalid(format!("bad {name} length range {lo}..={hi}")));
            }
        }
        if !(self.topic_boost >= 1.0 && self.topic_boost.is_finite()) {
            return Err(Error::invalid("topic boost must be finite and at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub words_x: Vec<String>,
    pub words_y: Vec<String>,
    /// `translation[i]` is the index in `words_y` of the translation of `words_x[i]`.
    pub translation: Vec<usize>,
    pub home_topic: Vec<usize>,
    pub labels: Vec<String>,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub train_x: Vec<LabeledDoc>,
    pub test_x: Vec<LabeledDoc>,
    pub train_y: Vec<LabeledDoc>,
    pub test_y: Vec<LabeledDoc>,
}

const SYLLABLES_X: [&str; 8] = ["ba", "de", "ki", "lo", "mu", "na", "po", "ri"];
const SYLLABLES_Y: [&str; 8] = ["za", "xe", "vo", "tu", "shi", "gra", "fe", "que"];

/// Base-8 spelling with at least two syllables. Both syllable sets are
/// prefix-free, so distinct indices give distinct words.
fn pseudo_word(mut i: usize, syllables: &[&str; 8]) -> String {
    let mut digits = Vec::new();
    while i > 0 || digits.len() < 2 {
        digits.push(i % 8);
        i /= 8;
    }
    digits.iter().rev().map(|&d| syllables[d]).collect()
}

pub fn label_name(c: usize) -> String {
    format!("c{c}")
}

struct World {
    topics: Vec<WeightedIndex<f64>>,
    translation: Vec<usize>,
    vocab_size: usize,
}

impl World {
    fn sample_x(&self, rng: &mut ChaCha8Rng, topic: usize, len: (usize, usize)) -> Vec<usize> {
        let n = rng.gen_range(len.0..=len.1);
        (0..n).map(|_| self.topics[topic].sample(rng)).collect()
    }

    fn translate(&self, rng: &mut ChaCha8Rng, tokens: &[usize], noise: f64) -> Vec<usize> {
        tokens
            .iter()
            .map(|&t| {
                // draw both numbers every token so noise=0 keeps the stream aligned
                let flip = rng.gen::<f64>() < noise;
                let other = rng.gen_range(0..self.vocab_size);
                if flip {
                    other
                } else {
                    self.translation[t]
                }
            })
            .collect()
    }
}

fn render(tokens: &[usize], words: &[String]) -> String {
    tokens.iter().map(|&t| words[t].as_str()).collect::<Vec<_>>().join(" ")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let v = cfg.vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words_x: Vec<String> = (0..v).map(|i| pseudo_word(i, &SYLLABLES_X)).collect();
    let words_y: Vec<String> = (0..v).map(|i| pseudo_word(i, &SYLLABLES_Y)).collect();
    let mut translation: Vec<usize> = (0..v).collect();
    translation.shuffle(&mut rng);
    let mut slots: Vec<usize> = (0..v).collect();
    slots.shuffle(&mut rng);
    let mut home_topic = vec![0; v];
    for (k, &w) in slots.iter().enumerate() {
        home_topic[w] = k % cfg.classes;
    }
    let topics = (0..cfg.classes)
        .map(|t| {
            let weights: Vec<f64> = home_topic.iter().map(|&h| if h == t { cfg.topic_boost } else { 1.0 }).collect();
            WeightedIndex::new(weights).expect("positive weights")
        })
        .collect();
    let world = World {
        topics,
        translation: translation.clone(),
        vocab_size: v,
    };

    let mut src = Vec::with_capacity(cfg.pairs);
    let mut tgt = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        let topic = rng.gen_range(0..cfg.classes);
        let x = world.sample_x(&mut rng, topic, cfg.sentence_len);
        let y = world.translate(&mut rng, &x, cfg.noise);
        src.push(render(&x, &words_x));
        tgt.push(render(&y, &words_y));
    }

    let docs = |n: usize, lang_y: bool, rng: &mut ChaCha8Rng| -> Vec<LabeledDoc> {
        (0..n)
            .map(|_| {
                let topic = rng.gen_range(0..cfg.classes);
                let x = world.sample_x(rng, topic, cfg.doc_len);
                let text = if lang_y {
                    render(&world.translate(rng, &x, cfg.noise), &words_y)
                } else {
                    render(&x, &words_x)
                };
                LabeledDoc {
                    label: label_name(topic),
                    text,
                }
            })
            .collect()
    };
    let train_x = docs(cfg.train_docs, false, &mut rng);
    let test_x = docs(cfg.test_docs, false, &mut rng);
    let train_y = docs(cfg.train_docs, true, &mut rng);
    let test_y = docs(cfg.test_docs, true, &mut rng);

    Ok(SynthCorpus {
        words_x,
        words_y,
        translation,
        home_topic,
        labels: (0..cfg.classes).map(label_name).collect(),
        src,
        tgt,
        train_x,
        test_x,
        train_y,
        test_y,
    })
}

/// How often the true translation of a source word is among its nearest
/// target-language neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recovery {
    pub rank1: usize,
    pub rank5: usize,
    pub words: usize,
}

/// Source words missing from the model's vocabulary count as misses.
pub fn translation_recovery(model: &BilingualModel, corpus: &SynthCorpus) -> Result<Recovery> {
    let tx = EmbeddingTable::from_model(model, Lang::X)?;
    let ty = EmbeddingTable::from_model(model, Lang::Y)?;
    let mut r = Recovery {
        rank1: 0,
        rank5: 0,
        words: corpus.words_x.len(),
    };
    for (i, w) in corpus.words_x.iter().enumerate() {
        if tx.vocab.get(w).is_none() {
            continue;
        }
        let gold = &corpus.words_y[corpus.translation[i]];
        let hits = nearest(w, &tx, &ty, 5)?;
        r.rank1 += (hits[0].word == *gold) as usize;
        r.rank5 += hits.iter().any(|h| h.word == *gold) as usize;
    }
    Ok(r)
}

/// File names written by [`write_corpus`], relative to the output directory.
pub mod files {
    pub const SRC: &str = "pairs.x.txt";
    pub const TGT: &str = "pairs.y.txt";
    pub const TRAIN_X: &str = "train.x.tsv";
    pub const TEST_X: &str = "test.x.tsv";
    pub const TRAIN_Y: &str = "train.y.tsv";
    pub const TEST_Y: &str = "test.y.tsv";
    pub const TRANSLATION: &str = "translation.tsv";
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the corpus into `dir` and returns the paths in a fixed order.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let p = |name: &str| dir.join(name);
    write_lines(&p(files::SRC), &corpus.src)?;
    write_lines(&p(files::TGT), &corpus.tgt)?;
    write_labeled(&p(files::TRAIN_X), &corpus.train_x)?;
    write_labeled(&p(files::TEST_X), &corpus.test_x)?;
    write_labeled(&p(files::TRAIN_Y), &corpus.train_y)?;
    write_labeled(&p(files::TEST_Y), &corpus.test_y)?;
    let table: Vec<String> = corpus
        .words_x
        .iter()
        .zip(&corpus.translation)
        .map(|(x, &j)| format!("{x}\t{}", corpus.words_y[j]))
        .collect();
    write_lines(&p(files::TRANSLATION), &table)?;
    Ok([files::SRC, files::TGT, files::TRAIN_X, files::TEST_X, files::TRAIN_Y, files::TEST_Y, files::TRANSLATION]
        .iter()
        .map(|n| p(n))
        .collect())
}
