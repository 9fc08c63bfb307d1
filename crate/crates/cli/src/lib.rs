//! `bae` command-line interface.

pub mod manifest;
pub mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bae_core::autoencoder::Aggregation;
use bae_core::classifier::{cross_lingual_eval, EvalConfig, EvalResult, DEFAULT_EPOCHS};
use bae_core::corpus::{compute_tfidf_sized, read_labeled, read_lines, to_bow, tokenize, LabeledDoc};
use bae_core::embeddings::{doc_vector, export_embeddings, nearest, EmbeddingTable};
use bae_core::math::Nonlinearity;
use bae_core::model_io::{load_model, save_model};
use bae_core::synth::{generate, write_corpus, SynthConfig};
use bae_core::train::{prepare_corpus, train_with, TrainConfig};
use bae_core::{BilingualModel, Lang, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::{sha256_hex, FileDigest, RunManifest};
use output::{MergeRow, TrainsizeRow};

#[derive(Debug)]
pub enum CliError {
    Clap(clap::Error),
    Usage(String),
    Data(bae_core::Error),
    Numeric(bae_core::Error),
    Replay(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Replay(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Clap(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Numeric(e) => write!(f, "numeric failure: {e}"),
            CliError::Replay(m) => write!(f, "replay mismatch: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bae_core::Error> for CliError {
    fn from(e: bae_core::Error) -> Self {
        match e {
            bae_core::Error::NonFinite { .. } => CliError::Numeric(e),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: bae_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "bae", version, about = "Bilingual bag-of-words autoencoders: training, queries and cross-lingual evaluation")]
pub struct Cli {
    /// Where to write the run manifest [default: next to the main output,
    /// or ./<command>.manifest.json for commands that only print]
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic parallel corpus with labelled documents.
    GenSynth(GenSynthArgs),
    /// Train a bilingual autoencoder on an aligned corpus.
    Train(TrainArgs),
    /// Nearest neighbours of a word.
    Nn(NnArgs),
    /// Tf-idf weighted document vectors.
    DocVec(DocVecArgs),
    /// Cross-lingual classification; writes predictions and metrics.
    Classify(ClassifyArgs),
    /// Cross-lingual classification; prints the metrics JSON.
    Eval(EvalArgs),
    /// Accuracy as a function of classifier training size.
    SweepTrainsize(SweepTrainsizeArgs),
    /// Retrain with several merge sizes and evaluate both directions.
    SweepMerge(SweepMergeArgs),
    /// Write one language's embeddings as text.
    Export(ExportArgs),
    /// Re-run a manifest and check the outputs are identical.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LangArg {
    X,
    Y,
}

impl From<LangArg> for Lang {
    fn from(l: LangArg) -> Lang {
        match l {
            LangArg::X => Lang::X,
            LangArg::Y => Lang::Y,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantArg {
    Binary,
    Tree,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityArg {
    Sigmoid,
    Tanh,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationArg {
    Sum,
    Average,
}

#[derive(Args, Debug, Clone)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 2000)]
    pub pairs: usize,
    /// Probability of replacing a translated token by a random word.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, env = "BAE_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub train_docs: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_docs: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Source-language sentences, one per line.
    #[arg(long)]
    pub src: PathBuf,
    /// Target-language sentences, aligned line by line with --src.
    #[arg(long)]
    pub tgt: PathBuf,
    /// Extra monolingual source documents.
    #[arg(long)]
    pub mono_x: Option<PathBuf>,
    #[arg(long)]
    pub mono_y: Option<PathBuf>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 40)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Correlation weight; 0 disables the regularizer.
    #[arg(long, default_value_t = 4.0)]
    pub lambda: f64,
    /// Merged instances per update and per correlation window.
    #[arg(long, default_value_t = 20)]
    pub corr_batch: usize,
    #[arg(long, env = "BAE_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Binary)]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value_t = NonlinearityArg::Sigmoid)]
    pub nonlinearity: NonlinearityArg,
    #[arg(long, value_enum, default_value_t = AggregationArg::Sum)]
    pub aggregation: AggregationArg,
    /// Share the binary decoder with the encoder (Vdec = W transposed).
    #[arg(long)]
    pub tie_decoders: bool,
    /// Drop the two within-language losses for aligned pairs.
    #[arg(long)]
    pub cross_only: bool,
    /// Ignore --mono-x/--mono-y.
    #[arg(long)]
    pub no_mono: bool,
    /// Gradient threads per update; 1 is bit-reproducible.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

impl ModelArgs {
    pub fn config(&self, merge_k: usize) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            learning_rate: self.lr,
            merge_k,
            lambda: self.lambda,
            corr_batch: self.corr_batch,
            seed: self.seed,
            variant: match self.variant {
                VariantArg::Binary => Variant::Binary,
                VariantArg::Tree => Variant::Tree,
            },
            nonlinearity: match self.nonlinearity {
                NonlinearityArg::Sigmoid => Nonlinearity::Sigmoid,
                NonlinearityArg::Tanh => Nonlinearity::Tanh,
            },
            aggregation: match self.aggregation {
                AggregationArg::Sum => Aggregation::Sum,
                AggregationArg::Average => Aggregation::Average,
            },
            tie_decoders: self.tie_decoders,
            include_monolingual_docs: !self.no_mono,
            cross_only: self.cross_only,
            threads: self.threads,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sentence pairs summed into one training instance.
    #[arg(long, default_value_t = 5)]
    pub merge: usize,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report JSON [default: <out>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-epoch loss and correlation CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct NnArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub word: String,
    /// Language of the query word.
    #[arg(long, value_enum, default_value_t = LangArg::X)]
    pub lang: LangArg,
    /// Search the other language.
    #[arg(long)]
    pub cross: bool,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Args, Debug, Clone)]
pub struct DocVecArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Documents, one per line; idf is computed over this file.
    #[arg(long)]
    pub docs: PathBuf,
    /// Lines are `label<TAB>text`.
    #[arg(long)]
    pub labeled: bool,
    #[arg(long, value_enum, default_value_t = LangArg::X)]
    pub lang: LangArg,
    /// Output TSV [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalFlags {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled training documents (`label<TAB>text`).
    #[arg(long)]
    pub train_docs: PathBuf,
    /// Labelled test documents.
    #[arg(long)]
    pub test_docs: PathBuf,
    #[arg(long, value_enum, default_value_t = LangArg::X)]
    pub train_lang: LangArg,
    /// [default: the language other than --train-lang]
    #[arg(long, value_enum)]
    pub test_lang: Option<LangArg>,
    #[arg(long, env = "BAE_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Perceptron epochs.
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long)]
    pub l2_normalize_doc: bool,
}

impl EvalFlags {
    fn langs(&self) -> (Lang, Lang) {
        let train: Lang = self.train_lang.into();
        (train, self.test_lang.map(Lang::from).unwrap_or(train.other()))
    }

    fn config(&self, train_size: usize) -> EvalConfig {
        EvalConfig {
            train_size,
            seed: self.seed,
            epochs: self.epochs,
            l2_normalize: self.l2_normalize_doc,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long, default_value_t = 100)]
    pub train_size: usize,
    /// `doc_id<TAB>gold<TAB>pred` output.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Metrics JSON output.
    #[arg(long)]
    pub metrics: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long, default_value_t = 100)]
    pub train_size: usize,
}

pub const DEFAULT_SIZES: [usize; 6] = [100, 200, 500, 1000, 5000, 10000];
pub const DEFAULT_MERGES: [usize; 3] = [5, 25, 50];

#[derive(Args, Debug, Clone)]
pub struct SweepTrainsizeArgs {
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
    pub sizes: Vec<usize>,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SweepMergeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MERGES)]
    pub merges: Vec<usize>,
    #[arg(long)]
    pub train_x: PathBuf,
    #[arg(long)]
    pub test_x: PathBuf,
    #[arg(long)]
    pub train_y: PathBuf,
    #[arg(long)]
    pub test_y: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub train_size: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub classifier_epochs: usize,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = LangArg::X)]
    pub lang: LangArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest_path: PathBuf,
}

/// What a command did, for printing and for its manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: Vec<u8>,
    /// Human-oriented progress, printed to stderr.
    pub log: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    /// Manifest location when --manifest is not given.
    pub default_manifest: Option<PathBuf>,
}

impl Outcome {
    fn new(config: impl Serialize) -> Self {
        Outcome {
            config: serde_json::to_value(config).expect("config serializes"),
            threads: 1,
            ..Default::default()
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenSynth(_) => "gen-synth",
        Command::Train(_) => "train",
        Command::Nn(_) => "nn",
        Command::DocVec(_) => "doc-vec",
        Command::Classify(_) => "classify",
        Command::Eval(_) => "eval",
        Command::SweepTrainsize(_) => "sweep-trainsize",
        Command::SweepMerge(_) => "sweep-merge",
        Command::Export(_) => "export",
        Command::Replay(_) => "replay",
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Parses `args` (without the program name), runs the command and writes
/// its manifest.
pub fn run<I, S>(args: I) -> CliResult<Outcome>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(std::iter::once("bae".to_owned()).chain(args.iter().cloned())).map_err(CliError::Clap)?;
    let clock = Instant::now();
    let name = command_name(&cli.command);
    let outcome = match &cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a)?,
        Command::Train(a) => cmd_train(a, !cli.quiet)?,
        Command::Nn(a) => cmd_nn(a)?,
        Command::DocVec(a) => cmd_doc_vec(a)?,
        Command::Classify(a) => cmd_classify(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::SweepTrainsize(a) => cmd_sweep_trainsize(a)?,
        Command::SweepMerge(a) => cmd_sweep_merge(a, !cli.quiet)?,
        Command::Export(a) => cmd_export(a)?,
        Command::Replay(a) => return cmd_replay(a),
    };
    let manifest_path = cli
        .manifest
        .clone()
        .or_else(|| outcome.default_manifest.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{name}.manifest.json")));
    let digests = |paths: &[PathBuf]| -> CliResult<Vec<FileDigest>> { Ok(paths.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?) };
    let manifest = RunManifest {
        command: name.to_owned(),
        args,
        config: outcome.config.clone(),
        seeds: outcome.seeds.clone(),
        env_seed: std::env::var("BAE_SEED").ok(),
        threads: outcome.threads,
        inputs: digests(&outcome.inputs)?,
        outputs: digests(&outcome.outputs)?,
        stdout_sha256: (!outcome.stdout.is_empty()).then(|| sha256_hex(&outcome.stdout)),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path)?;
    Ok(outcome)
}

fn cmd_gen_synth(a: &GenSynthArgs) -> CliResult<Outcome> {
    let cfg = SynthConfig {
        vocab_size: a.vocab_size,
        classes: a.classes,
        pairs: a.pairs,
        noise: a.noise,
        seed: a.seed,
        train_docs: a.train_docs,
        test_docs: a.test_docs,
        ..Default::default()
    };
    cfg.validate().map_err(usage)?;
    let corpus = generate(&cfg)?;
    let mut out = Outcome::new(&cfg);
    out.outputs = write_corpus(&corpus, &a.out)?;
    out.seeds.insert("seed".into(), a.seed);
    out.default_manifest = Some(a.out.join("manifest.json"));
    out.log.push(format!("wrote {} pairs and {} labelled documents to {}", cfg.pairs, 2 * (cfg.train_docs + cfg.test_docs), a.out.display()));
    Ok(out)
}

fn read_optional(path: &Option<PathBuf>) -> CliResult<Vec<String>> {
    Ok(match path {
        Some(p) => read_lines(p)?,
        None => Vec::new(),
    })
}

fn corpus_inputs(c: &CorpusArgs) -> Vec<PathBuf> {
    let mut v = vec![c.src.clone(), c.tgt.clone()];
    v.extend(c.mono_x.iter().cloned());
    v.extend(c.mono_y.iter().cloned());
    v
}

fn train_model(corpus: &CorpusArgs, cfg: &TrainConfig, log: &mut Vec<String>, progress: bool) -> CliResult<(BilingualModel, bae_core::TrainReport, bae_core::train::PreparedCorpus)> {
    cfg.validate().map_err(usage)?;
    let src = read_lines(&corpus.src)?;
    let tgt = read_lines(&corpus.tgt)?;
    let mono_x = read_optional(&corpus.mono_x)?;
    let mono_y = read_optional(&corpus.mono_y)?;
    let prepared = prepare_corpus(&src, &tgt, &mono_x, &mono_y, corpus.max_vocab, corpus.min_count)?;
    if prepared.dropped > 0 {
        log.push(format!("dropped {} pairs with an empty side", prepared.dropped));
    }
    let (model, report) = train_with(&prepared.data, cfg, |e| {
        if !progress {
            return;
        }
        eprintln!(
            "epoch {:>3}  total {:.4}  corr {}  ({:.2}s)",
            e.epoch,
            e.mean_total,
            e.mean_correlation.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into()),
            e.seconds
        )
    })?;
    Ok((model, report, prepared))
}

fn cmd_train(a: &TrainArgs, progress: bool) -> CliResult<Outcome> {
    let cfg = a.model.config(a.merge);
    let mut out = Outcome::new(&cfg);
    let (model, report, prepared) = train_model(&a.corpus, &cfg, &mut out.log, progress)?;
    save_model(&model, &a.out)?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(&report_path, &text)?;
    let vx = with_suffix(&a.out, ".vocab-x.tsv");
    let vy = with_suffix(&a.out, ".vocab-y.tsv");
    prepared.vocab_x.write_tsv(&vx)?;
    prepared.vocab_y.write_tsv(&vy)?;
    out.outputs = vec![a.out.clone(), report_path, vx, vy];
    if let Some(c) = &a.curves {
        write_text(c, &output::curves_csv(&report.epochs))?;
        out.outputs.push(c.clone());
    }
    out.inputs = corpus_inputs(&a.corpus);
    out.seeds.insert("seed".into(), cfg.seed);
    out.threads = cfg.threads;
    out.default_manifest = Some(with_suffix(&a.out, ".manifest.json"));
    out.config = serde_json::json!({ "model": report.model, "train": cfg });
    out.log.push(format!(
        "{}: {} pairs, {} updates, final objective {}",
        report.model, report.pairs, report.updates, report.final_objective
    ));
    Ok(out)
}

fn cmd_nn(a: &NnArgs) -> CliResult<Outcome> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let model = load_model(&a.model)?;
    let qlang: Lang = a.lang.into();
    let tlang = if a.cross { qlang.other() } else { qlang };
    let query = EmbeddingTable::from_model(&model, qlang)?;
    let target = EmbeddingTable::from_model(&model, tlang)?;
    let hits = nearest(&a.word, &query, &target, a.k)?;
    let mut out = Outcome::new(serde_json::json!({ "word": a.word, "lang": a.lang, "cross": a.cross, "k": a.k }));
    out.stdout = output::neighbors_tsv(&hits).into_bytes();
    out.inputs = vec![a.model.clone()];
    Ok(out)
}

fn read_docs(path: &Path, labeled: bool) -> CliResult<Vec<String>> {
    Ok(if labeled {
        read_labeled(path)?.into_iter().map(|d| d.text).collect()
    } else {
        read_lines(path)?
    })
}

fn cmd_doc_vec(a: &DocVecArgs) -> CliResult<Outcome> {
    let model = load_model(&a.model)?;
    let table = EmbeddingTable::from_model(&model, a.lang.into())?;
    let texts = read_docs(&a.docs, a.labeled)?;
    let bags: Vec<_> = texts.iter().map(|t| to_bow(&tokenize(t), &table.vocab)).collect();
    let stats = compute_tfidf_sized(&bags, table.len())?;
    let vectors = bags
        .iter()
        .map(|b| doc_vector(b, &table, &stats).map(|d| d.vector))
        .collect::<Result<Vec<_>, _>>()?;
    let text = output::doc_vectors_tsv(&vectors);
    let mut out = Outcome::new(serde_json::json!({ "lang": a.lang, "labeled": a.labeled }));
    out.inputs = vec![a.model.clone(), a.docs.clone()];
    match &a.out {
        Some(p) => {
            write_text(p, &text)?;
            out.outputs.push(p.clone());
            out.default_manifest = Some(with_suffix(p, ".manifest.json"));
        }
        None => out.stdout = text.into_bytes(),
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    train_lang: Lang,
    test_lang: Lang,
    #[serde(flatten)]
    eval: &'a EvalConfig,
}

fn load_eval_inputs(f: &EvalFlags) -> CliResult<(BilingualModel, Vec<LabeledDoc>, Vec<LabeledDoc>)> {
    Ok((load_model(&f.model)?, read_labeled(&f.train_docs)?, read_labeled(&f.test_docs)?))
}

fn run_eval(f: &EvalFlags, train_size: usize) -> CliResult<(EvalResult, EvalConfig)> {
    let cfg = f.config(train_size);
    if cfg.epochs == 0 || cfg.train_size == 0 {
        return Err(CliError::Usage("--epochs and --train-size must be at least 1".into()));
    }
    let (model, train_docs, test_docs) = load_eval_inputs(f)?;
    if train_size > train_docs.len() {
        return Err(CliError::Usage(format!("--train-size {train_size} exceeds the {} training documents", train_docs.len())));
    }
    let (tl, sl) = f.langs();
    Ok((cross_lingual_eval(&model, &train_docs, tl, &test_docs, sl, &cfg)?, cfg))
}

fn eval_outcome(f: &EvalFlags, cfg: &EvalConfig) -> Outcome {
    let (train_lang, test_lang) = f.langs();
    let mut out = Outcome::new(EvalSummary {
        train_lang,
        test_lang,
        eval: cfg,
    });
    out.inputs = vec![f.model.clone(), f.train_docs.clone(), f.test_docs.clone()];
    out.seeds.insert("seed".into(), f.seed);
    out
}

fn metrics_for(f: &EvalFlags, cfg: &EvalConfig, result: &EvalResult) -> String {
    let (train_lang, test_lang) = f.langs();
    output::metrics_json(
        result,
        EvalSummary {
            train_lang,
            test_lang,
            eval: cfg,
        },
    )
}

fn cmd_classify(a: &ClassifyArgs) -> CliResult<Outcome> {
    let (result, cfg) = run_eval(&a.eval, a.train_size)?;
    write_text(&a.predictions, &output::predictions_tsv(&result))?;
    write_text(&a.metrics, &metrics_for(&a.eval, &cfg, &result))?;
    let mut out = eval_outcome(&a.eval, &cfg);
    out.outputs = vec![a.predictions.clone(), a.metrics.clone()];
    out.default_manifest = Some(with_suffix(&a.metrics, ".manifest.json"));
    out.log.push(format!("accuracy {:.4} (majority baseline {:.4}) on {} documents", result.accuracy, result.majority_baseline, result.n_test));
    Ok(out)
}

fn cmd_eval(a: &EvalArgs) -> CliResult<Outcome> {
    let (result, cfg) = run_eval(&a.eval, a.train_size)?;
    let mut out = eval_outcome(&a.eval, &cfg);
    out.stdout = metrics_for(&a.eval, &cfg, &result).into_bytes();
    out.log.push(format!("majority baseline {:.4}", result.majority_baseline));
    Ok(out)
}

fn cmd_sweep_trainsize(a: &SweepTrainsizeArgs) -> CliResult<Outcome> {
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(CliError::Usage("--sizes must be positive".into()));
    }
    let (model, train_docs, test_docs) = load_eval_inputs(&a.eval)?;
    let (tl, sl) = a.eval.langs();
    let mut out = eval_outcome(&a.eval, &a.eval.config(0));
    let mut rows = Vec::with_capacity(a.sizes.len());
    for &size in &a.sizes {
        let result = if size > train_docs.len() {
            let note = format!("skipped: exceeds pool of {} documents", train_docs.len());
            out.log.push(format!("warning: train size {size} {note}"));
            Err(note)
        } else {
            let r = cross_lingual_eval(&model, &train_docs, tl, &test_docs, sl, &a.eval.config(size))?;
            Ok((r.accuracy, r.majority_baseline))
        };
        rows.push(TrainsizeRow { train_size: size, result });
    }
    write_text(&a.out, &output::trainsize_csv(&rows))?;
    out.config["sizes"] = serde_json::json!(a.sizes);
    out.outputs = vec![a.out.clone()];
    out.default_manifest = Some(with_suffix(&a.out, ".manifest.json"));
    Ok(out)
}

fn cmd_sweep_merge(a: &SweepMergeArgs, progress: bool) -> CliResult<Outcome> {
    if a.merges.is_empty() || a.merges.contains(&0) {
        return Err(CliError::Usage("--merges must be positive".into()));
    }
    let docs = [&a.train_x, &a.test_x, &a.train_y, &a.test_y].map(|p| read_labeled(p));
    let [train_x, test_x, train_y, test_y] = docs;
    let (train_x, test_x, train_y, test_y) = (train_x?, test_x?, train_y?, test_y?);
    let eval_cfg = EvalConfig {
        train_size: a.train_size,
        seed: a.model.seed,
        epochs: a.classifier_epochs,
        l2_normalize: false,
    };
    let mut out = Outcome::new(());
    let mut rows = Vec::new();
    let mut configs = Vec::new();
    for &k in &a.merges {
        let cfg = a.model.config(k);
        let (model, report, _) = train_model(&a.corpus, &cfg, &mut out.log, progress)?;
        let xy = cross_lingual_eval(&model, &train_x, Lang::X, &test_y, Lang::Y, &eval_cfg)?;
        let yx = cross_lingual_eval(&model, &train_y, Lang::Y, &test_x, Lang::X, &eval_cfg)?;
        out.log.push(format!("merge {k}: {} X->Y {:.4} Y->X {:.4}", report.model, xy.accuracy, yx.accuracy));
        out.seeds.insert(format!("merge_{k}"), cfg.seed);
        rows.push(MergeRow {
            merge_k: k,
            seed: cfg.seed,
            x_to_y: xy.accuracy,
            y_to_x: yx.accuracy,
        });
        configs.push(cfg);
    }
    write_text(&a.out, &output::merge_csv(&rows))?;
    out.config = serde_json::json!({ "runs": configs, "classifier": eval_cfg });
    out.inputs = corpus_inputs(&a.corpus);
    out.inputs.extend([a.train_x.clone(), a.test_x.clone(), a.train_y.clone(), a.test_y.clone()]);
    out.outputs = vec![a.out.clone()];
    out.threads = a.model.threads;
    out.default_manifest = Some(with_suffix(&a.out, ".manifest.json"));
    Ok(out)
}

fn cmd_export(a: &ExportArgs) -> CliResult<Outcome> {
    let model = load_model(&a.model)?;
    let table = EmbeddingTable::from_model(&model, a.lang.into())?;
    export_embeddings(&table, &a.out)?;
    let mut out = Outcome::new(serde_json::json!({ "lang": a.lang }));
    out.inputs = vec![a.model.clone()];
    out.outputs = vec![a.out.clone()];
    out.default_manifest = Some(with_suffix(&a.out, ".manifest.json"));
    Ok(out)
}

/// Re-executes the recorded command, rewriting its outputs and manifest,
/// then compares output and stdout digests with the recorded ones.
fn cmd_replay(a: &ReplayArgs) -> CliResult<Outcome> {
    let recorded = RunManifest::read(&a.manifest_path)?;
    if recorded.command == "replay" {
        return Err(CliError::Usage("cannot replay a replay".into()));
    }
    if recorded.threads != 1 {
        return Err(CliError::Usage("only single-threaded runs replay bit-exactly".into()));
    }
    let mut args = recorded.args.clone();
    if !args.iter().any(|s| s == "--manifest" || s.starts_with("--manifest=")) {
        args.extend(["--manifest".to_owned(), a.manifest_path.display().to_string()]);
    }
    let previous = std::env::var("BAE_SEED").ok();
    set_env_seed(recorded.env_seed.as_deref());
    let rerun = run(args);
    set_env_seed(previous.as_deref());
    let rerun = rerun?;

    let mut mismatches = Vec::new();
    for d in &recorded.outputs {
        let now = FileDigest::of(&d.path)?;
        if now.sha256 != d.sha256 {
            mismatches.push(d.path.display().to_string());
        }
    }
    let stdout = (!rerun.stdout.is_empty()).then(|| sha256_hex(&rerun.stdout));
    if stdout != recorded.stdout_sha256 {
        mismatches.push("<stdout>".into());
    }
    if !mismatches.is_empty() {
        return Err(CliError::Replay(mismatches.join(", ")));
    }
    let mut out = rerun;
    out.log.push(format!(
        "replayed {}: {} output file(s){} identical",
        recorded.command,
        recorded.outputs.len(),
        if recorded.stdout_sha256.is_some() { " and stdout" } else { "" }
    ));
    Ok(out)
}

fn set_env_seed(v: Option<&str>) {
    match v {
        Some(s) => std::env::set_var("BAE_SEED", s),
        None => std::env::remove_var("BAE_SEED"),
    }
}
