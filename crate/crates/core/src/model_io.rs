//! Little-endian binary model file.
//!
//! ```text
//! "BAE1"  version:u8=1  variant:u8  nonlinearity:u8  aggregation:u8  tied:u8
//! D:u32  Vx:u32  Vy:u32  tree_seed:u64
//! Wx[D x Vx]  Wy[D x Vy]  c[D]                      (f64, row-major)
//! decX  decY
//!   binary: rows[V x D] (absent when tied)  b[V]
//!   tree:   perm:u32[V]  node_bias[V-1]  node_weight[(V-1) x D]
//! words_x  words_y: count:u32, then per word len:u32 + UTF-8 bytes
//! ```

use std::fs;
use std::path::Path;

use crate::autoencoder::Aggregation;
use crate::bilingual::{BilingualModel, DecoderParams, Params, Variant};
use crate::error::{Error, Result};
use crate::math::{Nonlinearity, WordMatrix};
use crate::tree::TreeLayout;

pub const MAGIC: &[u8; 4] = b"BAE1";
pub const VERSION: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

/// `dim x count` matrix in row-major order (row = hidden unit).
fn put_embedding(out: &mut Vec<u8>, m: &WordMatrix) {
    for d in 0..m.dim() {
        for i in 0..m.count() {
            out.extend_from_slice(&m.get(d, i).to_le_bytes());
        }
    }
}

/// `count x dim` row-major, which is the in-memory layout.
fn put_rows(out: &mut Vec<u8>, m: &WordMatrix) {
    put_f64s(out, m.as_slice());
}

fn put_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_words(out: &mut Vec<u8>, words: &[String]) {
    put_u32(out, words.len());
    for w in words {
        put_u32(out, w.len());
        out.extend_from_slice(w.as_bytes());
    }
}

fn put_decoder(out: &mut Vec<u8>, dec: &DecoderParams, layout: Option<&TreeLayout>) {
    match dec {
        DecoderParams::Binary { rows, bias } => {
            if let Some(r) = rows {
                put_rows(out, r);
            }
            put_f64s(out, bias);
        }
        DecoderParams::Tree { node_bias, node_weight } => {
            for &p in layout.expect("tree layout").permutation() {
                out.extend_from_slice(&p.to_le_bytes());
            }
            put_f64s(out, node_bias);
            put_rows(out, node_weight);
        }
    }
}

pub fn to_bytes(m: &BilingualModel) -> Vec<u8> {
    let p = &m.params;
    let mut out = Vec::with_capacity(64 + 8 * (p.wx.as_slice().len() + p.wy.as_slice().len()) * 3);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(m.variant.code());
    out.push(m.nonlinearity.code());
    out.push(m.aggregation.code());
    out.push(m.is_tied() as u8);
    put_u32(&mut out, m.dim());
    put_u32(&mut out, p.wx.count());
    put_u32(&mut out, p.wy.count());
    out.extend_from_slice(&m.tree_seed.to_le_bytes());
    put_embedding(&mut out, &p.wx);
    put_embedding(&mut out, &p.wy);
    put_f64s(&mut out, &p.c);
    let (tx, ty) = match &m.trees {
        Some((x, y)) => (Some(x), Some(y)),
        None => (None, None),
    };
    put_decoder(&mut out, &p.dec_x, tx);
    put_decoder(&mut out, &p.dec_y, ty);
    put_words(&mut out, &m.words_x);
    put_words(&mut out, &m.words_y);
    out
}

pub fn save_model(m: &BilingualModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(m))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        if end > self.buf.len() {
            return Err(Error::Truncated(what));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or(Error::Truncated(what))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn embedding(&mut self, dim: usize, count: usize, what: &'static str) -> Result<WordMatrix> {
        let rows = self.f64s(dim * count, what)?;
        let mut m = WordMatrix::zeros(dim, count);
        for d in 0..dim {
            for i in 0..count {
                m.column_mut(i)[d] = rows[d * count + i];
            }
        }
        Ok(m)
    }

    fn rows(&mut self, dim: usize, count: usize, what: &'static str) -> Result<WordMatrix> {
        Ok(WordMatrix::from_columns(dim, count, self.f64s(dim * count, what)?))
    }

    fn words(&mut self, what: &'static str) -> Result<Vec<String>> {
        let n = self.u32(what)?;
        let mut out = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = self.u32(what)?;
            let bytes = self.take(len, what)?;
            let w = std::str::from_utf8(bytes).map_err(|_| Error::invalid(format!("{what}: invalid UTF-8")))?;
            out.push(w.to_owned());
        }
        Ok(out)
    }

    fn decoder(&mut self, variant: Variant, tied: bool, dim: usize, v: usize, what: &'static str) -> Result<(DecoderParams, Option<TreeLayout>)> {
        Ok(match variant {
            Variant::Binary => {
                let rows = if tied { None } else { Some(self.rows(dim, v, what)?) };
                let bias = self.f64s(v, what)?;
                (DecoderParams::Binary { rows, bias }, None)
            }
            Variant::Tree => {
                if v < 2 {
                    return Err(Error::invalid("tree decoder needs at least 2 words"));
                }
                let perm = self
                    .take(4 * v, what)?
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                let layout = TreeLayout::from_permutation(perm)?;
                let node_bias = self.f64s(v - 1, what)?;
                let node_weight = self.rows(dim, v - 1, what)?;
                (DecoderParams::Tree { node_bias, node_weight }, Some(layout))
            }
        })
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<BilingualModel> {
    let mut r = Reader { buf, pos: 0 };
    if buf.len() < 4 {
        return Err(Error::Truncated("magic"));
    }
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let variant_code = r.u8("header")?;
    let variant = Variant::from_code(variant_code).ok_or_else(|| Error::invalid(format!("unknown variant code {variant_code}")))?;
    let nl = r.u8("header")?;
    let nonlinearity = Nonlinearity::from_code(nl).ok_or_else(|| Error::invalid(format!("unknown nonlinearity code {nl}")))?;
    let ag = r.u8("header")?;
    let aggregation = Aggregation::from_code(ag).ok_or_else(|| Error::invalid(format!("unknown aggregation code {ag}")))?;
    let tied = match r.u8("header")? {
        0 => false,
        1 => true,
        t => return Err(Error::invalid(format!("bad tied flag {t}"))),
    };
    if tied && variant == Variant::Tree {
        return Err(Error::invalid("tied flag set on a tree model"));
    }
    let dim = r.u32("header")?;
    let vx = r.u32("header")?;
    let vy = r.u32("header")?;
    if dim == 0 || vx == 0 || vy == 0 {
        return Err(Error::invalid("zero-sized model dimensions"));
    }
    let tree_seed = r.u64("header")?;
    let wx = r.embedding(dim, vx, "Wx")?;
    let wy = r.embedding(dim, vy, "Wy")?;
    let c = r.f64s(dim, "c")?;
    let (dec_x, tx) = r.decoder(variant, tied, dim, vx, "decoder X")?;
    let (dec_y, ty) = r.decoder(variant, tied, dim, vy, "decoder Y")?;
    let words_x = r.words("vocabulary X")?;
    let words_y = r.words("vocabulary Y")?;
    if words_x.len() != vx || words_y.len() != vy {
        return Err(Error::Shape("embedded vocabulary size differs from header".into()));
    }
    if r.pos != buf.len() {
        return Err(Error::invalid(format!("{} trailing bytes after model", buf.len() - r.pos)));
    }
    let trees = match (tx, ty) {
        (Some(mut x), Some(mut y)) => {
            x.set_seed(tree_seed);
            y.set_seed(tree_seed);
            Some((x, y))
        }
        _ => None,
    };
    Ok(BilingualModel {
        params: Params {
            wx,
            wy,
            c,
            dec_x,
            dec_y,
        },
        variant,
        nonlinearity,
        aggregation,
        trees,
        tree_seed,
        words_x,
        words_y,
    })
}

pub fn load_model(path: &Path) -> Result<BilingualModel> {
    from_bytes(&fs::read(path)?)
}
