//! Bag-of-words autoencoder pieces shared by the monolingual and bilingual
//! models: encoders, the binary reconstruction decoder, the tree decoder
//! wrapper, their losses and hand-written gradients.

use serde::{Deserialize, Serialize};

use crate::corpus::BagOfWords;
use crate::error::{Error, Result};
use crate::math::{axpy, dot, sigmoid, Nonlinearity, WordMatrix};
use crate::tree::{self, WordTree};

/// Decoder probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside logs.
pub const PROB_EPS: f64 = 1e-10;

/// How word vectors are pooled when the encoder sees counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Average,
}

impl Aggregation {
    pub fn code(self) -> u8 {
        match self {
            Aggregation::Sum => 0,
            Aggregation::Average => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Aggregation::Sum),
            1 => Some(Aggregation::Average),
            _ => None,
        }
    }
}

/// Which view of the bag the encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderInput {
    /// Each distinct word once.
    Binary,
    /// Every token, optionally averaged.
    Counts(Aggregation),
}

/// Weight each column of `bag` receives in the pre-activation sum.
fn column_weights(bag: &BagOfWords, input: EncoderInput) -> Result<impl Iterator<Item = (usize, f64)> + '_> {
    let scale = match input {
        EncoderInput::Counts(Aggregation::Average) => {
            if bag.is_empty() {
                return Err(Error::EmptyBag("averaging encoder input"));
            }
            1.0 / bag.total() as f64
        }
        _ => 1.0,
    };
    Ok(bag.entries().map(move |(i, n)| {
        let k = match input {
            EncoderInput::Binary => 1.0,
            EncoderInput::Counts(_) => n as f64 * scale,
        };
        (i, k)
    }))
}

/// `h(c + sum_i k_i W[:, i])` for the chosen input view.
pub fn encode_with(
    bag: &BagOfWords,
    w: &WordMatrix,
    c: &[f64],
    nonlinearity: Nonlinearity,
    input: EncoderInput,
) -> Result<Vec<f64>> {
    bag.check_range(w.count())?;
    if c.len() != w.dim() {
        return Err(Error::Shape(format!("bias length {} vs dim {}", c.len(), w.dim())));
    }
    let mut acc = vec![0.0; w.dim()];
    for (i, k) in column_weights(bag, input)? {
        axpy(k, w.column(i), &mut acc);
    }
    Ok(acc
        .iter()
        .zip(c)
        .map(|(s, b)| nonlinearity.apply(b + s))
        .collect())
}

/// Backpropagates `dphi` through the encoder into `grad_w` and `grad_c`.
pub fn encoder_backward(
    bag: &BagOfWords,
    phi: &[f64],
    dphi: &[f64],
    nonlinearity: Nonlinearity,
    input: EncoderInput,
    grad_w: &mut WordMatrix,
    grad_c: &mut [f64],
) -> Result<()> {
    let da: Vec<f64> = phi
        .iter()
        .zip(dphi)
        .map(|(&y, &g)| g * nonlinearity.derivative_from_output(y))
        .collect();
    axpy(1.0, &da, grad_c);
    for (i, k) in column_weights(bag, input)? {
        axpy(k, &da, grad_w.column_mut(i));
    }
    Ok(())
}

/// Cross-entropy contribution of one output unit with clamped probability.
#[inline]
fn xent_term(target: bool, p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if target {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `sigm(rows . phi + bias)` where `rows` holds one `D`-vector per output word.
pub fn decode_binary_with(phi: &[f64], rows: &WordMatrix, bias: &[f64]) -> Result<Vec<f64>> {
    if rows.dim() != phi.len() || rows.count() != bias.len() {
        return Err(Error::Shape(format!(
            "decoder is {}x{} with bias {}, hidden size {}",
            rows.count(),
            rows.dim(),
            bias.len(),
            phi.len()
        )));
    }
    Ok(rows
        .columns()
        .zip(bias)
        .map(|(r, b)| sigmoid(dot(r, phi) + b))
        .collect())
}

/// Full-vocabulary binary cross-entropy between the binary view of `target`
/// and the reconstruction `vhat`, in nats.
pub fn binary_xent_loss(target: &BagOfWords, vhat: &[f64]) -> Result<f64> {
    target.check_range(vhat.len())?;
    let mut present = target.indices().peekable();
    let mut loss = 0.0;
    for (j, &p) in vhat.iter().enumerate() {
        let hit = present.peek() == Some(&j);
        if hit {
            present.next();
        }
        loss += xent_term(hit, p);
    }
    Ok(loss)
}

/// Forward and backward pass of the binary decoder and its loss. Gradients
/// are added to `grad_rows`, `grad_bias` and `dphi`.
pub fn binary_decoder_backward(
    phi: &[f64],
    rows: &WordMatrix,
    bias: &[f64],
    target: &BagOfWords,
    grad_rows: &mut WordMatrix,
    grad_bias: &mut [f64],
    dphi: &mut [f64],
) -> Result<f64> {
    if rows.dim() != phi.len() || rows.count() != bias.len() {
        return Err(Error::Shape("binary decoder dimensions".into()));
    }
    target.check_range(rows.count())?;
    let mut present = target.indices().peekable();
    let mut loss = 0.0;
    for j in 0..rows.count() {
        let hit = present.peek() == Some(&j);
        if hit {
            present.next();
        }
        let row = rows.column(j);
        let p = sigmoid(dot(row, phi) + bias[j]);
        loss += xent_term(hit, p);
        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
            // clamped: the loss term is locally constant
            continue;
        }
        let dz = p - if hit { 1.0 } else { 0.0 };
        grad_bias[j] += dz;
        axpy(dz, phi, grad_rows.column_mut(j));
        axpy(dz, row, dphi);
    }
    Ok(loss)
}

/// Word embeddings `W` (`D x V`), encoder bias `c` and pooling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w: WordMatrix,
    pub c: Vec<f64>,
    pub nonlinearity: Nonlinearity,
    pub aggregation: Aggregation,
}

impl EncoderParams {
    pub fn zeros(dim: usize, vocab: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("hidden size must be at least 1"));
        }
        Ok(EncoderParams {
            w: WordMatrix::zeros(dim, vocab),
            c: vec![0.0; dim],
            nonlinearity: Nonlinearity::Sigmoid,
            aggregation: Aggregation::Sum,
        })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// Encoder over the binary view: duplicate words contribute once.
pub fn encode_binary(bag: &BagOfWords, p: &EncoderParams) -> Result<Vec<f64>> {
    encode_with(bag, &p.w, &p.c, p.nonlinearity, EncoderInput::Binary)
}

/// Encoder over counts, summed or averaged per `p.aggregation`.
pub fn encode_counts(bag: &BagOfWords, p: &EncoderParams) -> Result<Vec<f64>> {
    encode_with(bag, &p.w, &p.c, p.nonlinearity, EncoderInput::Counts(p.aggregation))
}

/// Reconstruction layer `sigm(Vdec phi + b)`. With `rows == None` the decoder
/// is tied and uses the encoder's `W` transposed.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDecoderParams {
    pub rows: Option<WordMatrix>,
    pub bias: Vec<f64>,
}

impl BinaryDecoderParams {
    pub fn tied(vocab: usize) -> Self {
        BinaryDecoderParams {
            rows: None,
            bias: vec![0.0; vocab],
        }
    }

    pub fn untied(dim: usize, vocab: usize) -> Self {
        BinaryDecoderParams {
            rows: Some(WordMatrix::zeros(dim, vocab)),
            bias: vec![0.0; vocab],
        }
    }

    pub fn is_tied(&self) -> bool {
        self.rows.is_none()
    }

    pub fn rows<'a>(&'a self, encoder_w: &'a WordMatrix) -> &'a WordMatrix {
        self.rows.as_ref().unwrap_or(encoder_w)
    }
}

pub fn decode_binary(phi: &[f64], p: &BinaryDecoderParams, encoder_w: &WordMatrix) -> Result<Vec<f64>> {
    decode_binary_with(phi, p.rows(encoder_w), &p.bias)
}

/// Gradients of a monolingual autoencoder loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderGrads {
    pub w: WordMatrix,
    pub c: Vec<f64>,
    pub decoder: DecoderGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderGrads {
    /// `rows` is `None` for a tied decoder; its gradient is folded into `w`.
    Binary { rows: Option<WordMatrix>, bias: Vec<f64> },
    Tree { node_bias: Vec<f64>, node_weight: WordMatrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: AutoencoderGrads,
}

/// Loss of the binary autoencoder on `bag`.
pub fn loss_binary(bag: &BagOfWords, enc: &EncoderParams, dec: &BinaryDecoderParams) -> Result<f64> {
    let phi = encode_binary(bag, enc)?;
    binary_xent_loss(bag, &decode_binary(&phi, dec, &enc.w)?)
}

pub fn backward_binary(bag: &BagOfWords, enc: &EncoderParams, dec: &BinaryDecoderParams) -> Result<LossGrad> {
    let phi = encode_binary(bag, enc)?;
    let mut gw = WordMatrix::zeros(enc.w.dim(), enc.w.count());
    let mut gc = vec![0.0; enc.dim()];
    let mut gbias = vec![0.0; dec.bias.len()];
    let mut dphi = vec![0.0; enc.dim()];
    let (loss, grows) = match &dec.rows {
        Some(rows) => {
            let mut grows = WordMatrix::zeros(rows.dim(), rows.count());
            let loss = binary_decoder_backward(&phi, rows, &dec.bias, bag, &mut grows, &mut gbias, &mut dphi)?;
            (loss, Some(grows))
        }
        None => {
            let loss = binary_decoder_backward(&phi, &enc.w, &dec.bias, bag, &mut gw, &mut gbias, &mut dphi)?;
            (loss, None)
        }
    };
    encoder_backward(bag, &phi, &dphi, enc.nonlinearity, EncoderInput::Binary, &mut gw, &mut gc)?;
    Ok(LossGrad {
        loss,
        grads: AutoencoderGrads {
            w: gw,
            c: gc,
            decoder: DecoderGrads::Binary { rows: grows, bias: gbias },
        },
    })
}

/// Loss of the tree-decoder autoencoder on `bag`.
pub fn loss_tree(bag: &BagOfWords, enc: &EncoderParams, tree: &WordTree) -> Result<f64> {
    let phi = encode_counts(bag, enc)?;
    tree.nll(bag, &phi)
}

pub fn backward_tree(bag: &BagOfWords, enc: &EncoderParams, t: &WordTree) -> Result<LossGrad> {
    let input = EncoderInput::Counts(enc.aggregation);
    let phi = encode_counts(bag, enc)?;
    let mut gw = WordMatrix::zeros(enc.w.dim(), enc.w.count());
    let mut gc = vec![0.0; enc.dim()];
    let mut gnb = vec![0.0; t.node_bias.len()];
    let mut gnw = WordMatrix::zeros(t.node_weight.dim(), t.node_weight.count());
    let mut dphi = vec![0.0; enc.dim()];
    let loss = tree::backward(&t.layout, &t.node_bias, &t.node_weight, bag, &phi, &mut gnb, &mut gnw, &mut dphi)?;
    encoder_backward(bag, &phi, &dphi, enc.nonlinearity, input, &mut gw, &mut gc)?;
    Ok(LossGrad {
        loss,
        grads: AutoencoderGrads {
            w: gw,
            c: gc,
            decoder: DecoderGrads::Tree {
                node_bias: gnb,
                node_weight: gnw,
            },
        },
    })
}
