//! Browser-independent demo logic; the wasm bindings are thin wrappers.

use bae_core::classifier::{cross_lingual_eval, EvalConfig};
use bae_core::embeddings::{nearest, EmbeddingTable};
use bae_core::synth::{generate, translation_recovery, Recovery, SynthConfig, SynthCorpus};
use bae_core::train::{prepare_corpus, train, PreparedCorpus, TrainConfig};
use bae_core::{BilingualModel, Lang, Variant};
use serde::{Deserialize, Serialize};

pub type DemoResult<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub merge_k: usize,
    pub lambda: f64,
    pub corr_batch: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            dim: 16,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            merge_k: d.merge_k,
            lambda: d.lambda,
            corr_batch: d.corr_batch,
            seed: d.seed,
            variant: d.variant,
        }
    }
}

impl TrainSettings {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            merge_k: self.merge_k,
            lambda: self.lambda,
            corr_batch: self.corr_batch,
            seed: self.seed,
            variant: self.variant,
            ..Default::default()
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean_total: f64,
    pub mean_cross: f64,
    pub mean_correlation: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub model: String,
    pub curve: Vec<CurvePoint>,
    pub recovery: Recovery,
}

#[derive(Debug, Serialize)]
pub struct NeighborRow {
    pub word: String,
    pub distance: f64,
    pub is_translation: bool,
}

#[derive(Debug, Serialize)]
pub struct NeighborQuery {
    pub query: String,
    pub translation: Option<String>,
    pub neighbors: Vec<NeighborRow>,
}

#[derive(Debug, Serialize)]
pub struct SizePoint {
    pub train_size: usize,
    pub x_to_y: f64,
    pub y_to_x: f64,
    pub majority: f64,
}

pub struct Demo {
    corpus: SynthCorpus,
    prepared: PreparedCorpus,
    model: Option<BilingualModel>,
}

impl Demo {
    pub fn new(synth: &SynthConfig) -> DemoResult<Demo> {
        let corpus = generate(synth).map_err(err)?;
        let none: Vec<String> = Vec::new();
        let prepared = prepare_corpus(&corpus.src, &corpus.tgt, &none, &none, None, 1).map_err(err)?;
        Ok(Demo {
            corpus,
            prepared,
            model: None,
        })
    }

    pub fn from_json(synth_json: &str) -> DemoResult<Demo> {
        let cfg: SynthConfig = if synth_json.trim().is_empty() {
            SynthConfig::default()
        } else {
            serde_json::from_str(synth_json).map_err(err)?
        };
        Demo::new(&cfg)
    }

    pub fn corpus(&self) -> &SynthCorpus {
        &self.corpus
    }

    pub fn sample_pairs(&self, n: usize) -> Vec<(String, String)> {
        self.corpus.src.iter().zip(&self.corpus.tgt).take(n).map(|(a, b)| (a.clone(), b.clone())).collect()
    }

    pub fn words(&self, lang: Lang) -> &[String] {
        match lang {
            Lang::X => &self.prepared.data.words_x,
            Lang::Y => &self.prepared.data.words_y,
        }
    }

    pub fn train(&mut self, settings: &TrainSettings) -> DemoResult<TrainSummary> {
        let cfg = settings.config();
        let (model, report) = train(&self.prepared.data, &cfg).map_err(err)?;
        let recovery = translation_recovery(&model, &self.corpus).map_err(err)?;
        self.model = Some(model);
        Ok(TrainSummary {
            model: report.model,
            curve: report
                .epochs
                .iter()
                .map(|e| CurvePoint {
                    epoch: e.epoch,
                    mean_total: e.mean_total,
                    mean_cross: e.mean_lxy + e.mean_lyx,
                    mean_correlation: e.mean_correlation,
                })
                .collect(),
            recovery,
        })
    }

    fn model(&self) -> DemoResult<&BilingualModel> {
        self.model.as_ref().ok_or_else(|| "train a model first".to_owned())
    }

    fn gold(&self, word: &str, lang: Lang) -> Option<String> {
        let c = &self.corpus;
        match lang {
            Lang::X => c.words_x.iter().position(|w| w == word).map(|i| c.words_y[c.translation[i]].clone()),
            Lang::Y => {
                let j = c.words_y.iter().position(|w| w == word)?;
                c.translation.iter().position(|&t| t == j).map(|i| c.words_x[i].clone())
            }
        }
    }

    pub fn neighbors(&self, word: &str, lang: Lang, cross: bool, k: usize) -> DemoResult<NeighborQuery> {
        let model = self.model()?;
        let target_lang = if cross { lang.other() } else { lang };
        let q = EmbeddingTable::from_model(model, lang).map_err(err)?;
        let t = EmbeddingTable::from_model(model, target_lang).map_err(err)?;
        let hits = nearest(word, &q, &t, k).map_err(err)?;
        let translation = self.gold(word, lang);
        Ok(NeighborQuery {
            query: word.to_owned(),
            neighbors: hits
                .into_iter()
                .map(|h| NeighborRow {
                    is_translation: cross && translation.as_deref() == Some(h.word.as_str()),
                    word: h.word,
                    distance: h.distance,
                })
                .collect(),
            translation,
        })
    }

    pub fn accuracy_by_size(&self, sizes: &[usize], seed: u64) -> DemoResult<Vec<SizePoint>> {
        let model = self.model()?;
        let c = &self.corpus;
        let pool = c.train_x.len().min(c.train_y.len());
        sizes
            .iter()
            .filter(|&&s| s > 0 && s <= pool)
            .map(|&train_size| {
                let cfg = EvalConfig {
                    train_size,
                    seed,
                    ..Default::default()
                };
                let xy = cross_lingual_eval(model, &c.train_x, Lang::X, &c.test_y, Lang::Y, &cfg).map_err(err)?;
                let yx = cross_lingual_eval(model, &c.train_y, Lang::Y, &c.test_x, Lang::X, &cfg).map_err(err)?;
                Ok(SizePoint {
                    train_size,
                    x_to_y: xy.accuracy,
                    y_to_x: yx.accuracy,
                    majority: xy.majority_baseline,
                })
            })
            .collect()
    }
}
