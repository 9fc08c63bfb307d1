//! Bilingual autoencoder: two embedding matrices with a shared encoder bias,
//! one decoder per language, the four reconstruction losses and the
//! cross-lingual correlation term.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, Aggregation, EncoderInput};
use crate::corpus::{AlignedPair, BagOfWords};
use crate::error::{Error, Result};
use crate::math::{Nonlinearity, WordMatrix};
use crate::tree::{self, TreeLayout};

/// Decoder family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Binary bag-of-words reconstruction with cross-entropy.
    #[default]
    Binary,
    /// Tree-factorized word distribution with multinomial likelihood.
    Tree,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Binary => 0,
            Variant::Tree => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Binary),
            1 => Some(Variant::Tree),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    X,
    Y,
}

impl Lang {
    pub fn other(self) -> Lang {
        match self {
            Lang::X => Lang::Y,
            Lang::Y => Lang::X,
        }
    }
}

/// Trainable parameters of one language's decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderParams {
    /// `rows == None` ties the decoder to the language's embedding matrix.
    Binary { rows: Option<WordMatrix>, bias: Vec<f64> },
    Tree { node_bias: Vec<f64>, node_weight: WordMatrix },
}

impl DecoderParams {
    fn zeros_like(&self) -> Self {
        match self {
            DecoderParams::Binary { rows, bias } => DecoderParams::Binary {
                rows: rows.as_ref().map(|r| WordMatrix::zeros(r.dim(), r.count())),
                bias: vec![0.0; bias.len()],
            },
            DecoderParams::Tree { node_bias, node_weight } => DecoderParams::Tree {
                node_bias: vec![0.0; node_bias.len()],
                node_weight: WordMatrix::zeros(node_weight.dim(), node_weight.count()),
            },
        }
    }

    fn slices<'a>(&'a self, prefix: &'static str, out: &mut Vec<(String, &'a [f64])>) {
        match self {
            DecoderParams::Binary { rows, bias } => {
                if let Some(r) = rows {
                    out.push((format!("{prefix}.rows"), r.as_slice()));
                }
                out.push((format!("{prefix}.bias"), bias));
            }
            DecoderParams::Tree { node_bias, node_weight } => {
                out.push((format!("{prefix}.node_bias"), node_bias));
                out.push((format!("{prefix}.node_weight"), node_weight.as_slice()));
            }
        }
    }

    fn slices_mut<'a>(&'a mut self, prefix: &'static str, out: &mut Vec<(String, &'a mut [f64])>) {
        match self {
            DecoderParams::Binary { rows, bias } => {
                if let Some(r) = rows {
                    out.push((format!("{prefix}.rows"), r.as_mut_slice()));
                }
                out.push((format!("{prefix}.bias"), bias));
            }
            DecoderParams::Tree { node_bias, node_weight } => {
                out.push((format!("{prefix}.node_bias"), node_bias));
                out.push((format!("{prefix}.node_weight"), node_weight.as_mut_slice()));
            }
        }
    }
}

/// Every trainable array of the bilingual model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub wx: WordMatrix,
    pub wy: WordMatrix,
    /// Encoder bias shared by both languages.
    pub c: Vec<f64>,
    pub dec_x: DecoderParams,
    pub dec_y: DecoderParams,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            wx: WordMatrix::zeros(self.wx.dim(), self.wx.count()),
            wy: WordMatrix::zeros(self.wy.dim(), self.wy.count()),
            c: vec![0.0; self.c.len()],
            dec_x: self.dec_x.zeros_like(),
            dec_y: self.dec_y.zeros_like(),
        }
    }

    /// Named views of every parameter group, in serialization order.
    pub fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![
            ("wx".to_owned(), self.wx.as_slice()),
            ("wy".to_owned(), self.wy.as_slice()),
            ("c".to_owned(), &self.c[..]),
        ];
        self.dec_x.slices("dec_x", &mut out);
        self.dec_y.slices("dec_y", &mut out);
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![
            ("wx".to_owned(), self.wx.as_mut_slice()),
            ("wy".to_owned(), self.wy.as_mut_slice()),
            ("c".to_owned(), &mut self.c[..]),
        ];
        self.dec_x.slices_mut("dec_x", &mut out);
        self.dec_y.slices_mut("dec_y", &mut out);
        out
    }

    /// `self += alpha * other`; shapes must match.
    pub fn add_scaled(&mut self, alpha: f64, other: &Params) {
        for ((_, dst), (_, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            crate::math::axpy(alpha, src, dst);
        }
    }

    pub fn set_zero(&mut self) {
        for (_, g) in self.groups_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|x| x.is_finite()))
    }

    fn w(&self, lang: Lang) -> &WordMatrix {
        match lang {
            Lang::X => &self.wx,
            Lang::Y => &self.wy,
        }
    }

    fn dec(&self, lang: Lang) -> &DecoderParams {
        match lang {
            Lang::X => &self.dec_x,
            Lang::Y => &self.dec_y,
        }
    }

    /// Mutable decoder gradient of `lang` together with that language's
    /// embedding gradient (target of tied decoder rows).
    fn dec_and_w_mut(&mut self, lang: Lang) -> (&mut DecoderParams, &mut WordMatrix) {
        match lang {
            Lang::X => (&mut self.dec_x, &mut self.wx),
            Lang::Y => (&mut self.dec_y, &mut self.wy),
        }
    }

    fn w_and_c_mut(&mut self, lang: Lang) -> (&mut WordMatrix, &mut Vec<f64>) {
        match lang {
            Lang::X => (&mut self.wx, &mut self.c),
            Lang::Y => (&mut self.wy, &mut self.c),
        }
    }
}

/// Architecture choices fixed at model creation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub vocab_x: usize,
    pub vocab_y: usize,
    pub variant: Variant,
    pub nonlinearity: Nonlinearity,
    pub aggregation: Aggregation,
    /// Binary variant only: decoder rows are the embedding columns.
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilingualModel {
    pub params: Params,
    pub variant: Variant,
    pub nonlinearity: Nonlinearity,
    pub aggregation: Aggregation,
    /// Leaf layouts for the tree variant, `(X, Y)`.
    pub trees: Option<(TreeLayout, TreeLayout)>,
    pub tree_seed: u64,
    pub words_x: Vec<String>,
    pub words_y: Vec<String>,
}

/// Half-width of the uniform embedding initialization for hidden size `dim`.
pub fn init_scale(dim: usize) -> f64 {
    0.1 / (dim as f64).sqrt()
}

impl BilingualModel {
    /// Random embeddings in `[-0.1, 0.1] / sqrt(D)`, zero biases and zero tree
    /// node weights. Untied binary decoder rows use the embedding range.
    pub fn init(shape: ModelShape, seed: u64, words_x: Vec<String>, words_y: Vec<String>) -> Result<Self> {
        if shape.dim == 0 {
            return Err(Error::invalid("hidden size must be at least 1"));
        }
        if shape.vocab_x == 0 || shape.vocab_y == 0 {
            return Err(Error::EmptyVocabulary);
        }
        if words_x.len() != shape.vocab_x || words_y.len() != shape.vocab_y {
            return Err(Error::Shape("word lists do not match vocabulary sizes".into()));
        }
        if shape.tied && shape.variant == Variant::Tree {
            return Err(Error::invalid("decoder tying applies to the binary variant only"));
        }
        let d = shape.dim;
        let scale = init_scale(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |dim: usize, count: usize| {
            let data = (0..dim * count).map(|_| rng.gen_range(-scale..=scale)).collect();
            WordMatrix::from_columns(dim, count, data)
        };
        let wx = uniform(d, shape.vocab_x);
        let wy = uniform(d, shape.vocab_y);
        let (dec_x, dec_y, trees) = match shape.variant {
            Variant::Binary => {
                let mut dec = |v: usize| DecoderParams::Binary {
                    rows: (!shape.tied).then(|| uniform(d, v)),
                    bias: vec![0.0; v],
                };
                (dec(shape.vocab_x), dec(shape.vocab_y), None)
            }
            Variant::Tree => {
                let mut tx = TreeLayout::new(shape.vocab_x, seed)?;
                let mut ty = TreeLayout::new(shape.vocab_y, seed.wrapping_add(1))?;
                tx.set_seed(seed);
                ty.set_seed(seed);
                let dec = |v: usize| DecoderParams::Tree {
                    node_bias: vec![0.0; v - 1],
                    node_weight: WordMatrix::zeros(d, v - 1),
                };
                (dec(shape.vocab_x), dec(shape.vocab_y), Some((tx, ty)))
            }
        };
        Ok(BilingualModel {
            params: Params {
                wx,
                wy,
                c: vec![0.0; d],
                dec_x,
                dec_y,
            },
            variant: shape.variant,
            nonlinearity: shape.nonlinearity,
            aggregation: shape.aggregation,
            trees,
            tree_seed: if shape.variant == Variant::Tree { seed } else { 0 },
            words_x,
            words_y,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            dim: self.dim(),
            vocab_x: self.params.wx.count(),
            vocab_y: self.params.wy.count(),
            variant: self.variant,
            nonlinearity: self.nonlinearity,
            aggregation: self.aggregation,
            tied: self.is_tied(),
        }
    }

    pub fn dim(&self) -> usize {
        self.params.c.len()
    }

    pub fn vocab_size(&self, lang: Lang) -> usize {
        self.params.w(lang).count()
    }

    pub fn words(&self, lang: Lang) -> &[String] {
        match lang {
            Lang::X => &self.words_x,
            Lang::Y => &self.words_y,
        }
    }

    pub fn embeddings(&self, lang: Lang) -> &WordMatrix {
        self.params.w(lang)
    }

    pub fn is_tied(&self) -> bool {
        matches!(self.params.dec_x, DecoderParams::Binary { rows: None, .. })
    }

    fn encoder_input(&self) -> EncoderInput {
        match self.variant {
            Variant::Binary => EncoderInput::Binary,
            Variant::Tree => EncoderInput::Counts(self.aggregation),
        }
    }

    fn tree(&self, lang: Lang) -> &TreeLayout {
        let (tx, ty) = self.trees.as_ref().expect("tree variant carries layouts");
        match lang {
            Lang::X => tx,
            Lang::Y => ty,
        }
    }

    /// Hidden representation of `bag` read in language `lang`.
    pub fn encode(&self, lang: Lang, bag: &BagOfWords) -> Result<Vec<f64>> {
        autoencoder::encode_with(bag, self.params.w(lang), &self.params.c, self.nonlinearity, self.encoder_input())
    }

    /// Reconstruction loss of `target` (a bag in language `lang`) from `phi`.
    pub fn decoder_loss(&self, lang: Lang, phi: &[f64], target: &BagOfWords) -> Result<f64> {
        match self.params.dec(lang) {
            DecoderParams::Binary { rows, bias } => {
                let rows = rows.as_ref().unwrap_or(self.params.w(lang));
                let vhat = autoencoder::decode_binary_with(phi, rows, bias)?;
                autoencoder::binary_xent_loss(target, &vhat)
            }
            DecoderParams::Tree { node_bias, node_weight } => {
                tree::nll(self.tree(lang), node_bias, node_weight, target, phi)
            }
        }
    }

    fn decoder_backward(
        &self,
        lang: Lang,
        phi: &[f64],
        target: &BagOfWords,
        grads: &mut Params,
        dphi: &mut [f64],
    ) -> Result<f64> {
        let (gdec, gw) = grads.dec_and_w_mut(lang);
        match (self.params.dec(lang), gdec) {
            (DecoderParams::Binary { rows, bias }, DecoderParams::Binary { rows: grows, bias: gbias }) => {
                match (rows, grows) {
                    (Some(r), Some(gr)) => autoencoder::binary_decoder_backward(phi, r, bias, target, gr, gbias, dphi),
                    (None, None) => {
                        autoencoder::binary_decoder_backward(phi, self.params.w(lang), bias, target, gw, gbias, dphi)
                    }
                    _ => Err(Error::Shape("gradient buffer does not match decoder tying".into())),
                }
            }
            (
                DecoderParams::Tree { node_bias, node_weight },
                DecoderParams::Tree {
                    node_bias: gb,
                    node_weight: gnw,
                },
            ) => tree::backward(self.tree(lang), node_bias, node_weight, target, phi, gb, gnw, dphi),
            _ => Err(Error::Shape("gradient buffer does not match decoder variant".into())),
        }
    }

    fn encoder_backward(&self, lang: Lang, bag: &BagOfWords, phi: &[f64], dphi: &[f64], grads: &mut Params) -> Result<()> {
        let (gw, gc) = grads.w_and_c_mut(lang);
        autoencoder::encoder_backward(bag, phi, dphi, self.nonlinearity, self.encoder_input(), gw, gc)
    }
}

/// The four reconstruction losses of one aligned pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairLosses {
    /// x reconstructed from x.
    pub lx: f64,
    /// y reconstructed from y.
    pub ly: f64,
    /// y reconstructed from x.
    pub lxy: f64,
    /// x reconstructed from y.
    pub lyx: f64,
}

impl PairLosses {
    pub fn sum(&self) -> f64 {
        self.lx + self.ly + self.lxy + self.lyx
    }
}

pub fn pair_losses(pair: &AlignedPair, m: &BilingualModel) -> Result<PairLosses> {
    if pair.src.is_empty() || pair.tgt.is_empty() {
        return Err(Error::EmptyBag("aligned pair side"));
    }
    let phi_x = m.encode(Lang::X, &pair.src)?;
    let phi_y = m.encode(Lang::Y, &pair.tgt)?;
    Ok(PairLosses {
        lx: m.decoder_loss(Lang::X, &phi_x, &pair.src)?,
        ly: m.decoder_loss(Lang::Y, &phi_y, &pair.tgt)?,
        lxy: m.decoder_loss(Lang::Y, &phi_x, &pair.tgt)?,
        lyx: m.decoder_loss(Lang::X, &phi_y, &pair.src)?,
    })
}

/// Added to each standard deviation in the correlation denominator.
pub const CORR_EPS: f64 = 1e-8;

struct ColumnStats {
    centered_x: Vec<f64>,
    centered_y: Vec<f64>,
    sd_x: f64,
    sd_y: f64,
    r: f64,
}

fn column_stats(phis_x: &[Vec<f64>], phis_y: &[Vec<f64>], d: usize) -> ColumnStats {
    let b = phis_x.len() as f64;
    let mean_x = phis_x.iter().map(|r| r[d]).sum::<f64>() / b;
    let mean_y = phis_y.iter().map(|r| r[d]).sum::<f64>() / b;
    let centered_x: Vec<f64> = phis_x.iter().map(|r| r[d] - mean_x).collect();
    let centered_y: Vec<f64> = phis_y.iter().map(|r| r[d] - mean_y).collect();
    let sd_x = (centered_x.iter().map(|u| u * u).sum::<f64>() / b).sqrt();
    let sd_y = (centered_y.iter().map(|v| v * v).sum::<f64>() / b).sqrt();
    let cov = centered_x.iter().zip(&centered_y).map(|(u, v)| u * v).sum::<f64>() / b;
    let r = cov / ((sd_x + CORR_EPS) * (sd_y + CORR_EPS));
    ColumnStats {
        centered_x,
        centered_y,
        sd_x,
        sd_y,
        r,
    }
}

fn check_corr_shapes(phis_x: &[Vec<f64>], phis_y: &[Vec<f64>]) -> Result<usize> {
    if phis_x.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation needs at least 2 rows, got {}",
            phis_x.len()
        )));
    }
    if phis_x.len() != phis_y.len() {
        return Err(Error::Shape("correlation inputs have different row counts".into()));
    }
    let d = phis_x[0].len();
    if phis_x.iter().chain(phis_y).any(|r| r.len() != d) {
        return Err(Error::Shape("correlation rows have different widths".into()));
    }
    Ok(d)
}

/// Sum over hidden dimensions of the Pearson correlation (population
/// moments, `CORR_EPS` added to each standard deviation) between matching
/// columns of two `B x D` row sets.
pub fn correlation(phis_x: &[Vec<f64>], phis_y: &[Vec<f64>]) -> Result<f64> {
    let d = check_corr_shapes(phis_x, phis_y)?;
    Ok((0..d).map(|k| column_stats(phis_x, phis_y, k).r).sum())
}

type Rows = Vec<Vec<f64>>;

/// Correlation value and its gradient with respect to every entry of both
/// inputs.
pub fn correlation_backward(phis_x: &[Vec<f64>], phis_y: &[Vec<f64>]) -> Result<(f64, Rows, Rows)> {
    let d = check_corr_shapes(phis_x, phis_y)?;
    let b = phis_x.len();
    let bf = b as f64;
    let mut gx = vec![vec![0.0; d]; b];
    let mut gy = vec![vec![0.0; d]; b];
    let mut total = 0.0;
    for k in 0..d {
        let s = column_stats(phis_x, phis_y, k);
        total += s.r;
        let (sx, sy) = (s.sd_x + CORR_EPS, s.sd_y + CORR_EPS);
        for i in 0..b {
            let (u, v) = (s.centered_x[i], s.centered_y[i]);
            let mut dx = v / (bf * sx * sy);
            if s.sd_x > 0.0 {
                dx -= s.r * u / (bf * s.sd_x * sx);
            }
            let mut dy = u / (bf * sx * sy);
            if s.sd_y > 0.0 {
                dy -= s.r * v / (bf * s.sd_y * sy);
            }
            gx[i][k] = dx;
            gy[i][k] = dy;
        }
    }
    Ok((total, gx, gy))
}

/// One training instance after merging.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Pair(AlignedPair),
    /// Monolingual document in language X; contributes only its
    /// self-reconstruction loss.
    MonoX(BagOfWords),
    MonoY(BagOfWords),
}

/// Weighting of the batch objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Weight of the correlation term.
    pub lambda: f64,
    /// Drop the self-reconstruction terms of aligned pairs.
    pub cross_only: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: 4.0,
            cross_only: false,
        }
    }
}

/// Loss sums over one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchStats {
    /// Value that was differentiated: pair losses (self terms unless
    /// cross-only) plus monolingual losses minus lambda times correlation.
    pub objective: f64,
    pub losses: PairLosses,
    pub mono_x: f64,
    pub mono_y: f64,
    /// Correlation over the batch's pairs when it has at least two.
    pub correlation: Option<f64>,
    pub pairs: usize,
    pub mono_docs: usize,
}

impl BatchStats {
    #[cfg(feature = "parallel")]
    fn absorb(&mut self, other: &BatchStats) {
        self.losses.lx += other.losses.lx;
        self.losses.ly += other.losses.ly;
        self.losses.lxy += other.losses.lxy;
        self.losses.lyx += other.losses.lyx;
        self.mono_x += other.mono_x;
        self.mono_y += other.mono_y;
        self.pairs += other.pairs;
        self.mono_docs += other.mono_docs;
    }

    /// Names the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        let terms = [
            ("l(x)", self.losses.lx),
            ("l(y)", self.losses.ly),
            ("l(x,y)", self.losses.lxy),
            ("l(y,x)", self.losses.lyx),
            ("monolingual l(x)", self.mono_x),
            ("monolingual l(y)", self.mono_y),
            ("correlation", self.correlation.unwrap_or(0.0)),
            ("objective", self.objective),
        ];
        terms.iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

struct Encoded {
    x: Option<Vec<f64>>,
    y: Option<Vec<f64>>,
}

fn encode_instance(m: &BilingualModel, inst: &Instance) -> Result<Encoded> {
    Ok(match inst {
        Instance::Pair(p) => {
            if p.src.is_empty() || p.tgt.is_empty() {
                return Err(Error::EmptyBag("aligned pair side"));
            }
            Encoded {
                x: Some(m.encode(Lang::X, &p.src)?),
                y: Some(m.encode(Lang::Y, &p.tgt)?),
            }
        }
        Instance::MonoX(b) => Encoded {
            x: Some(m.encode(Lang::X, b)?),
            y: None,
        },
        Instance::MonoY(b) => Encoded {
            x: None,
            y: Some(m.encode(Lang::Y, b)?),
        },
    })
}

/// Losses (and, with `grads`, their gradients) for a run of instances whose
/// hidden representations are already known. `extra_dphi` carries the
/// correlation gradient per instance.
fn accumulate(
    m: &BilingualModel,
    cfg: &ObjectiveConfig,
    instances: &[Instance],
    encoded: &[Encoded],
    extra_dphi: &[Option<(Vec<f64>, Vec<f64>)>],
    mut grads: Option<&mut Params>,
) -> Result<BatchStats> {
    let d = m.dim();
    let mut stats = BatchStats::default();
    for ((inst, enc), extra) in instances.iter().zip(encoded).zip(extra_dphi) {
        match (inst, grads.as_deref_mut()) {
            (Instance::Pair(p), None) => {
                let (phi_x, phi_y) = (enc.x.as_ref().unwrap(), enc.y.as_ref().unwrap());
                stats.losses.lx += m.decoder_loss(Lang::X, phi_x, &p.src)?;
                stats.losses.lxy += m.decoder_loss(Lang::Y, phi_x, &p.tgt)?;
                stats.losses.lyx += m.decoder_loss(Lang::X, phi_y, &p.src)?;
                stats.losses.ly += m.decoder_loss(Lang::Y, phi_y, &p.tgt)?;
                stats.pairs += 1;
            }
            (Instance::Pair(p), Some(g)) => {
                let (phi_x, phi_y) = (enc.x.as_ref().unwrap(), enc.y.as_ref().unwrap());
                let (mut dx, mut dy) = match extra {
                    Some((ex, ey)) => (ex.clone(), ey.clone()),
                    None => (vec![0.0; d], vec![0.0; d]),
                };
                stats.losses.lx += if cfg.cross_only {
                    m.decoder_loss(Lang::X, phi_x, &p.src)?
                } else {
                    m.decoder_backward(Lang::X, phi_x, &p.src, g, &mut dx)?
                };
                stats.losses.lxy += m.decoder_backward(Lang::Y, phi_x, &p.tgt, g, &mut dx)?;
                stats.losses.lyx += m.decoder_backward(Lang::X, phi_y, &p.src, g, &mut dy)?;
                stats.losses.ly += if cfg.cross_only {
                    m.decoder_loss(Lang::Y, phi_y, &p.tgt)?
                } else {
                    m.decoder_backward(Lang::Y, phi_y, &p.tgt, g, &mut dy)?
                };
                m.encoder_backward(Lang::X, &p.src, phi_x, &dx, g)?;
                m.encoder_backward(Lang::Y, &p.tgt, phi_y, &dy, g)?;
                stats.pairs += 1;
            }
            (Instance::MonoX(b), g) | (Instance::MonoY(b), g) => {
                let (lang, phi) = match inst {
                    Instance::MonoX(_) => (Lang::X, enc.x.as_ref().unwrap()),
                    _ => (Lang::Y, enc.y.as_ref().unwrap()),
                };
                let loss = match g {
                    None => m.decoder_loss(lang, phi, b)?,
                    Some(g) => {
                        let mut dphi = vec![0.0; d];
                        let loss = m.decoder_backward(lang, phi, b, g, &mut dphi)?;
                        m.encoder_backward(lang, b, phi, &dphi, g)?;
                        loss
                    }
                };
                match lang {
                    Lang::X => stats.mono_x += loss,
                    Lang::Y => stats.mono_y += loss,
                }
                stats.mono_docs += 1;
            }
        }
    }
    Ok(stats)
}

/// Objective of a batch and, when `grads` is given, its gradient added into
/// `grads`. Work is split into `threads` contiguous chunks whose partial
/// results are reduced in chunk order, so output depends on `threads` but is
/// deterministic for a fixed value.
pub fn batch_objective(
    m: &BilingualModel,
    instances: &[Instance],
    cfg: &ObjectiveConfig,
    grads: Option<&mut Params>,
    threads: usize,
) -> Result<BatchStats> {
    let encoded: Vec<Encoded> = instances.iter().map(|i| encode_instance(m, i)).collect::<Result<_>>()?;

    let pair_rows: Vec<usize> = instances
        .iter()
        .enumerate()
        .filter(|(_, i)| matches!(i, Instance::Pair(_)))
        .map(|(k, _)| k)
        .collect();
    let mut extra: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; instances.len()];
    let mut correlation = None;
    if pair_rows.len() >= 2 {
        let px: Vec<Vec<f64>> = pair_rows.iter().map(|&k| encoded[k].x.clone().unwrap()).collect();
        let py: Vec<Vec<f64>> = pair_rows.iter().map(|&k| encoded[k].y.clone().unwrap()).collect();
        if grads.is_some() && cfg.lambda != 0.0 {
            let (r, gx, gy) = correlation_backward(&px, &py)?;
            correlation = Some(r);
            for ((&k, gx), gy) in pair_rows.iter().zip(gx).zip(gy) {
                let scale = |g: Vec<f64>| g.into_iter().map(|v| -cfg.lambda * v).collect::<Vec<f64>>();
                extra[k] = Some((scale(gx), scale(gy)));
            }
        } else {
            correlation = Some(self::correlation(&px, &py)?);
        }
    }

    let threads = threads.max(1).min(instances.len().max(1));
    let mut stats = if threads == 1 {
        accumulate(m, cfg, instances, &encoded, &extra, grads)?
    } else {
        parallel_accumulate(m, cfg, instances, &encoded, &extra, grads, threads)?
    };

    let self_terms = if cfg.cross_only {
        0.0
    } else {
        stats.losses.lx + stats.losses.ly
    };
    stats.correlation = correlation;
    stats.objective = self_terms + stats.losses.lxy + stats.losses.lyx + stats.mono_x + stats.mono_y
        - cfg.lambda * correlation.unwrap_or(0.0);
    Ok(stats)
}

#[cfg(feature = "parallel")]
fn parallel_accumulate(
    m: &BilingualModel,
    cfg: &ObjectiveConfig,
    instances: &[Instance],
    encoded: &[Encoded],
    extra: &[Option<(Vec<f64>, Vec<f64>)>],
    grads: Option<&mut Params>,
    threads: usize,
) -> Result<BatchStats> {
    use rayon::prelude::*;

    let chunk = instances.len().div_ceil(threads);
    let with_grads = grads.is_some();
    let partials: Vec<Result<(BatchStats, Option<Params>)>> = (0..threads)
        .into_par_iter()
        .map(|t| {
            let lo = (t * chunk).min(instances.len());
            let hi = ((t + 1) * chunk).min(instances.len());
            let mut local = with_grads.then(|| m.params.zeros_like());
            let s = accumulate(m, cfg, &instances[lo..hi], &encoded[lo..hi], &extra[lo..hi], local.as_mut())?;
            Ok((s, local))
        })
        .collect();
    let mut stats = BatchStats::default();
    let mut grads = grads;
    for part in partials {
        let (s, local) = part?;
        stats.absorb(&s);
        if let (Some(g), Some(local)) = (grads.as_deref_mut(), local) {
            g.add_scaled(1.0, &local);
        }
    }
    Ok(stats)
}

#[cfg(not(feature = "parallel"))]
fn parallel_accumulate(
    m: &BilingualModel,
    cfg: &ObjectiveConfig,
    instances: &[Instance],
    encoded: &[Encoded],
    extra: &[Option<(Vec<f64>, Vec<f64>)>],
    grads: Option<&mut Params>,
    _threads: usize,
) -> Result<BatchStats> {
    accumulate(m, cfg, instances, encoded, extra, grads)
}
