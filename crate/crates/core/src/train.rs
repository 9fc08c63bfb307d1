//! Merged-mini-batch SGD over the bilingual objective.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::Aggregation;
use crate::bilingual::{batch_objective, BatchStats, BilingualModel, Instance, ModelShape, ObjectiveConfig, Variant};
use crate::corpus::{align_pairs, build_vocabulary, merge_pairs, to_bow, tokenize, AlignedPair, BagOfWords, Vocabulary};
use crate::error::{Error, Result};
use crate::math::Nonlinearity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Adjacent sentence pairs summed into one training instance.
    pub merge_k: usize,
    /// Correlation weight.
    pub lambda: f64,
    /// Merged instances per update (and per correlation window).
    pub corr_batch: usize,
    pub seed: u64,
    pub variant: Variant,
    pub nonlinearity: Nonlinearity,
    pub aggregation: Aggregation,
    pub tie_decoders: bool,
    pub include_monolingual_docs: bool,
    /// Only the two cross-language losses (plus correlation) for pairs.
    pub cross_only: bool,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 40,
            epochs: 20,
            learning_rate: 0.1,
            merge_k: 5,
            lambda: 4.0,
            corr_batch: 20,
            seed: 1,
            variant: Variant::Binary,
            nonlinearity: Nonlinearity::Sigmoid,
            aggregation: Aggregation::Sum,
            tie_decoders: false,
            include_monolingual_docs: true,
            cross_only: false,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.merge_k == 0 {
            return Err(Error::invalid("merge size must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if self.lambda > 0.0 && self.corr_batch < 2 {
            return Err(Error::invalid("correlation batch must hold at least 2 instances"));
        }
        if self.corr_batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.tie_decoders && self.variant == Variant::Tree {
            return Err(Error::invalid("decoder tying applies to the binary variant only"));
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda: self.lambda,
            cross_only: self.cross_only,
        }
    }

    /// Short model name: BAE-tr, BAE-cr or BAE-cr/corr.
    pub fn model_tag(&self) -> &'static str {
        match (self.variant, self.lambda > 0.0) {
            (Variant::Tree, _) => "BAE-tr",
            (Variant::Binary, false) => "BAE-cr",
            (Variant::Binary, true) => "BAE-cr/corr",
        }
    }
}

/// Training corpus: aligned pairs plus optional monolingual documents, all
/// as bags over the two vocabularies.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub pairs: Vec<AlignedPair>,
    pub mono_x: Vec<BagOfWords>,
    pub mono_y: Vec<BagOfWords>,
    pub words_x: Vec<String>,
    pub words_y: Vec<String>,
}

/// Vocabularies and bags built from raw parallel text.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub data: TrainData,
    pub vocab_x: Vocabulary,
    pub vocab_y: Vocabulary,
    /// Pairs dropped because one side had no in-vocabulary token.
    pub dropped: usize,
}

/// Tokenizes aligned lines, builds one vocabulary per side and converts
/// every pair to bags. Monolingual lines only add training documents; they
/// do not extend the vocabularies.
pub fn prepare_corpus<S: AsRef<str>>(
    src: &[S],
    tgt: &[S],
    mono_x: &[S],
    mono_y: &[S],
    max_vocab: Option<usize>,
    min_count: u64,
) -> Result<PreparedCorpus> {
    let tok = |lines: &[S]| -> Vec<Vec<String>> { lines.iter().map(|l| tokenize(l.as_ref())).collect() };
    let (sx, sy) = (tok(src), tok(tgt));
    if sx.len() != sy.len() {
        return Err(Error::invalid(format!(
            "aligned corpus line counts differ: {} source vs {} target",
            sx.len(),
            sy.len()
        )));
    }
    let vocab_x = build_vocabulary(&sx, max_vocab, min_count)?;
    let vocab_y = build_vocabulary(&sy, max_vocab, min_count)?;
    let aligned = align_pairs(&sx, &sy, &vocab_x, &vocab_y)?;
    let mono = |lines: &[S], v: &Vocabulary| -> Vec<BagOfWords> { tok(lines).iter().map(|t| to_bow(t, v)).collect() };
    Ok(PreparedCorpus {
        data: TrainData {
            pairs: aligned.pairs,
            mono_x: mono(mono_x, &vocab_x),
            mono_y: mono(mono_y, &vocab_y),
            words_x: vocab_x.words().to_vec(),
            words_y: vocab_y.words().to_vec(),
        },
        vocab_x,
        vocab_y,
        dropped: aligned.dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Per-pair means of the four losses.
    pub mean_lx: f64,
    pub mean_ly: f64,
    pub mean_lxy: f64,
    pub mean_lyx: f64,
    /// Per-pair mean of the sum of the four losses.
    pub mean_total: f64,
    pub mean_mono_x: Option<f64>,
    pub mean_mono_y: Option<f64>,
    /// Mean over updates of the batch correlation (sum over dimensions).
    pub mean_correlation: Option<f64>,
    pub objective: f64,
    pub updates: usize,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub config: TrainConfig,
    pub pairs: usize,
    pub merged_instances: usize,
    pub mono_docs: usize,
    pub epochs: Vec<EpochStats>,
    /// Objective over the unshuffled instance stream in windows of
    /// `corr_batch`, evaluated at the final parameters.
    pub final_objective: f64,
    pub updates: usize,
    /// SHA-256 of each parameter group's little-endian bytes.
    pub checksums: BTreeMap<String, String>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

pub fn param_checksums(model: &BilingualModel) -> BTreeMap<String, String> {
    model
        .params
        .groups()
        .into_iter()
        .map(|(name, data)| {
            let mut h = Sha256::new();
            for v in data {
                h.update(v.to_le_bytes());
            }
            (name, hex::encode(h.finalize()))
        })
        .collect()
}

/// Wall clock that reports zero where no monotonic clock exists.
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Merged pairs followed by monolingual documents, in corpus order.
pub fn build_instances(data: &TrainData, cfg: &TrainConfig) -> Result<Vec<Instance>> {
    let mut out: Vec<Instance> = merge_pairs(&data.pairs, cfg.merge_k)?
        .into_iter()
        .map(Instance::Pair)
        .collect();
    if cfg.include_monolingual_docs {
        out.extend(data.mono_x.iter().filter(|b| !b.is_empty()).cloned().map(Instance::MonoX));
        out.extend(data.mono_y.iter().filter(|b| !b.is_empty()).cloned().map(Instance::MonoY));
    }
    Ok(out)
}

/// Fresh model for `data` with `cfg`'s architecture and seed.
pub fn init_model(data: &TrainData, cfg: &TrainConfig) -> Result<BilingualModel> {
    let shape = ModelShape {
        dim: cfg.dim,
        vocab_x: data.words_x.len(),
        vocab_y: data.words_y.len(),
        variant: cfg.variant,
        nonlinearity: cfg.nonlinearity,
        aggregation: cfg.aggregation,
        tied: cfg.tie_decoders,
    };
    BilingualModel::init(shape, cfg.seed, data.words_x.clone(), data.words_y.clone())
}

pub fn train(data: &TrainData, cfg: &TrainConfig) -> Result<(BilingualModel, TrainReport)> {
    train_with(data, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    data: &TrainData,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(BilingualModel, TrainReport)> {
    cfg.validate()?;
    let model = init_model(data, cfg)?;
    train_from(model, data, cfg, on_epoch)
}

/// Continues SGD from an existing model.
pub fn train_from(
    mut model: BilingualModel,
    data: &TrainData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(BilingualModel, TrainReport)> {
    cfg.validate()?;
    if data.pairs.is_empty() {
        return Err(Error::invalid("training corpus has no aligned pairs"));
    }
    let instances = build_instances(data, cfg)?;
    let objective = cfg.objective();
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut updates = 0;
    let mut window: Vec<Instance> = Vec::with_capacity(cfg.corr_batch);

    for epoch in 1..=cfg.epochs {
        let clock = Stopwatch::start();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut sums = BatchStats::default();
        let (mut corr_sum, mut corr_n) = (0.0, 0usize);
        let mut epoch_updates = 0;
        for chunk in order.chunks(cfg.corr_batch) {
            window.clear();
            window.extend(chunk.iter().map(|&i| instances[i].clone()));
            grads.set_zero();
            let stats = batch_objective(&model, &window, &objective, Some(&mut grads), cfg.threads)?;
            if let Some(term) = stats.non_finite_term() {
                return Err(Error::NonFinite {
                    term,
                    epoch,
                    update: epoch_updates + 1,
                });
            }
            model.params.add_scaled(-cfg.learning_rate / window.len() as f64, &grads);
            if !model.params.all_finite() {
                return Err(Error::NonFinite {
                    term: "parameters",
                    epoch,
                    update: epoch_updates + 1,
                });
            }
            sums.losses.lx += stats.losses.lx;
            sums.losses.ly += stats.losses.ly;
            sums.losses.lxy += stats.losses.lxy;
            sums.losses.lyx += stats.losses.lyx;
            sums.mono_x += stats.mono_x;
            sums.mono_y += stats.mono_y;
            sums.objective += stats.objective;
            sums.pairs += stats.pairs;
            if let Some(r) = stats.correlation {
                corr_sum += r;
                corr_n += 1;
            }
            epoch_updates += 1;
        }
        updates += epoch_updates;

        let np = sums.pairs.max(1) as f64;
        let mono_n_x = instances.iter().filter(|i| matches!(i, Instance::MonoX(_))).count();
        let mono_n_y = instances.iter().filter(|i| matches!(i, Instance::MonoY(_))).count();
        let stats = EpochStats {
            epoch,
            mean_lx: sums.losses.lx / np,
            mean_ly: sums.losses.ly / np,
            mean_lxy: sums.losses.lxy / np,
            mean_lyx: sums.losses.lyx / np,
            mean_total: sums.losses.sum() / np,
            mean_mono_x: (mono_n_x > 0).then(|| sums.mono_x / mono_n_x as f64),
            mean_mono_y: (mono_n_y > 0).then(|| sums.mono_y / mono_n_y as f64),
            mean_correlation: (corr_n > 0).then(|| corr_sum / corr_n as f64),
            objective: sums.objective,
            updates: epoch_updates,
            seconds: clock.seconds(),
        };
        on_epoch(&stats);
        epochs.push(stats);
    }

    let final_objective = evaluate_objective(&model, &instances, cfg)?;
    let report = TrainReport {
        model: cfg.model_tag().to_owned(),
        config: cfg.clone(),
        pairs: data.pairs.len(),
        merged_instances: instances.iter().filter(|i| matches!(i, Instance::Pair(_))).count(),
        mono_docs: instances.len() - instances.iter().filter(|i| matches!(i, Instance::Pair(_))).count(),
        epochs,
        final_objective,
        updates,
        checksums: param_checksums(&model),
    };
    Ok((model, report))
}

/// Forward-only objective over `instances` taken in order, in windows of
/// `cfg.corr_batch`.
pub fn evaluate_objective(model: &BilingualModel, instances: &[Instance], cfg: &TrainConfig) -> Result<f64> {
    let objective = cfg.objective();
    let mut total = 0.0;
    for window in instances.chunks(cfg.corr_batch.max(1)) {
        total += batch_objective(model, window, &objective, None, 1)?.objective;
    }
    Ok(total)
}
