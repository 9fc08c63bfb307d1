//! Word vectors taken from a trained model: nearest-neighbour queries,
//! tf-idf document vectors and the plain-text export format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bilingual::{BilingualModel, Lang};
use crate::corpus::{BagOfWords, TfIdfStats, Vocabulary};
use crate::error::{Error, Result};
use crate::math::{axpy, WordMatrix};

/// Embedding columns of one language together with their words.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub lang: Lang,
    pub vocab: Vocabulary,
    pub vectors: WordMatrix,
}

impl EmbeddingTable {
    pub fn new(lang: Lang, vocab: Vocabulary, vectors: WordMatrix) -> Result<Self> {
        if vocab.len() != vectors.count() {
            return Err(Error::Shape(format!(
                "{} words but {} vectors",
                vocab.len(),
                vectors.count()
            )));
        }
        Ok(EmbeddingTable { lang, vocab, vectors })
    }

    pub fn from_model(model: &BilingualModel, lang: Lang) -> Result<Self> {
        let vocab = Vocabulary::from_words(model.words(lang).to_vec())?;
        Self::new(lang, vocab, model.embeddings(lang).clone())
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.count()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.count() == 0
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vocab.get(word).map(|i| self.vectors.column(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub vector: Vec<f64>,
    pub lang: Lang,
}

/// Sum over distinct words of `count * idf * column`.
pub fn doc_vector(doc: &BagOfWords, table: &EmbeddingTable, stats: &TfIdfStats) -> Result<DocVector> {
    doc.check_range(table.len())?;
    if stats.idf.len() != table.len() {
        return Err(Error::Shape("idf length differs from vocabulary".into()));
    }
    let mut v = vec![0.0; table.dim()];
    for (i, n) in doc.entries() {
        axpy(stats.weight(i, n), table.vectors.column(i), &mut v);
    }
    Ok(DocVector {
        vector: v,
        lang: table.lang,
    })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub word: String,
    pub index: usize,
    pub distance: f64,
}

/// The `k` target words closest to `query_word` in Euclidean distance,
/// nearest first, ties broken by word index. Within one language the query
/// itself always ranks first.
pub fn nearest(query_word: &str, query: &EmbeddingTable, target: &EmbeddingTable, k: usize) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let qi = query.vocab.get(query_word).ok_or_else(|| Error::Oov(query_word.to_owned()))?;
    nearest_to_vector(query.vectors.column(qi), target, k, (query.lang == target.lang).then_some(qi))
}

/// Brute-force scan of `target` around an arbitrary vector. `pin` forces one
/// index to the front.
pub fn nearest_to_vector(q: &[f64], target: &EmbeddingTable, k: usize, pin: Option<usize>) -> Result<Vec<Neighbor>> {
    if q.len() != target.dim() {
        return Err(Error::Shape("query vector width differs from table".into()));
    }
    let mut scored: Vec<(f64, usize)> = target
        .vectors
        .columns()
        .enumerate()
        .map(|(i, col)| (euclidean(q, col), i))
        .collect();
    scored.sort_by(|a, b| {
        let pa = Some(a.1) != pin;
        let pb = Some(b.1) != pin;
        pa.cmp(&pb).then(a.0.total_cmp(&b.0)).then(a.1.cmp(&b.1))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(distance, index)| Neighbor {
            word: target.vocab.word(index).to_owned(),
            index,
            distance,
        })
        .collect())
}

/// `%.9g`-style formatting: nine significant digits, trailing zeros removed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_zeros(&s).to_owned()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Text export: `V D` header, then `word v1 ... vD` per line.
pub fn write_embeddings<W: Write>(table: &EmbeddingTable, mut out: W) -> Result<()> {
    if table.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (i, col) in table.vectors.columns().enumerate() {
        write!(out, "{}", table.vocab.word(i))?;
        for v in col {
            write!(out, " {}", format_sig9(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn export_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_embeddings(table, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path, lang: Lang) -> Result<EmbeddingTable> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad header {header:?}"),
        })?;
    let [v, d] = dims[..] else {
        return Err(Error::Parse {
            line: 1,
            msg: format!("bad header {header:?}"),
        });
    };
    let mut words = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * d);
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default().to_owned();
        let values: Vec<f64> = fields
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: lineno,
                msg: "bad number".into(),
            })?;
        if values.len() != d {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {d} values, got {}", values.len()),
            });
        }
        words.push(word);
        data.extend(values);
    }
    if words.len() != v {
        return Err(Error::Parse {
            line: words.len() + 1,
            msg: format!("expected {v} words, got {}", words.len()),
        });
    }
    EmbeddingTable::new(lang, Vocabulary::from_words(words)?, WordMatrix::from_columns(d, v, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(lang: Lang, words: &[&str], dim: usize, data: Vec<f64>) -> EmbeddingTable {
        let vocab = Vocabulary::from_words(words.iter().map(|w| w.to_string()).collect()).unwrap();
        EmbeddingTable::new(lang, vocab, WordMatrix::from_columns(dim, words.len(), data)).unwrap()
    }

    #[test]
    fn doc_vector_examples() {
        let t = table(Lang::X, &["w", "u"], 2, vec![1.0, -1.0, 3.0, 4.0]);
        let zero_idf = TfIdfStats {
            idf: vec![0.0, 1.0],
            doc_count: 1,
        };
        assert_eq!(doc_vector(&BagOfWords::from_indices([0]), &t, &zero_idf).unwrap().vector, vec![0.0, 0.0]);
        let half = TfIdfStats {
            idf: vec![0.5, 1.0],
            doc_count: 1,
        };
        let v = doc_vector(&BagOfWords::from_counts([(0, 2)]), &t, &half).unwrap();
        assert_eq!(v.vector, vec![1.0, -1.0]);
        assert_eq!(doc_vector(&BagOfWords::new(), &t, &half).unwrap().vector, vec![0.0, 0.0]);
        assert!(doc_vector(&BagOfWords::from_indices([2]), &t, &half).is_err());
    }

    #[test]
    fn doc_vector_is_additive() {
        let t = table(Lang::Y, &["a", "b", "c"], 2, vec![0.3, 1.0, -2.0, 0.5, 0.25, 0.75]);
        let s = TfIdfStats {
            idf: vec![0.5, 1.5, 0.25],
            doc_count: 4,
        };
        let d1 = BagOfWords::from_counts([(0, 1), (2, 3)]);
        let d2 = BagOfWords::from_counts([(1, 2), (2, 1)]);
        let lhs = doc_vector(&d1.union(&d2), &t, &s).unwrap().vector;
        let a = doc_vector(&d1, &t, &s).unwrap().vector;
        let b = doc_vector(&d2, &t, &s).unwrap().vector;
        for k in 0..2 {
            assert!((lhs[k] - a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_examples() {
        let t = table(Lang::X, &["w0", "w1", "w2"], 1, vec![0.0, 1.0, 3.0]);
        let r = nearest("w0", &t, &t, 2).unwrap();
        assert_eq!(r[0].word, "w0");
        assert_eq!(r[0].distance, 0.0);
        assert_eq!((r[1].word.as_str(), r[1].distance), ("w1", 1.0));
        assert_eq!(nearest("w2", &t, &t, 1).unwrap()[0].word, "w2");
        assert!(matches!(nearest("zz", &t, &t, 1), Err(Error::Oov(_))));
        assert!(nearest("w0", &t, &t, 0).is_err());
        assert_eq!(nearest("w0", &t, &t, 10).unwrap().len(), 3);
    }

    #[test]
    fn same_language_query_comes_first_even_with_duplicates() {
        let t = table(Lang::X, &["a", "b", "c"], 1, vec![2.0, 2.0, 5.0]);
        let r = nearest("b", &t, &t, 3).unwrap();
        assert_eq!(r.iter().map(|n| n.word.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
        // across languages only distance and index matter
        let ty = table(Lang::Y, &["a", "b", "c"], 1, vec![2.0, 2.0, 5.0]);
        let r = nearest("b", &t, &ty, 3).unwrap();
        assert_eq!(r.iter().map(|n| n.word.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.5), "0.5");
        assert_eq!(format_sig9(-0.25), "-0.25");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(123456789.0), "123456789");
        assert_eq!(format_sig9(1234567891.0), "1.23456789e+09");
        assert_eq!(format_sig9(0.000123456789123), "0.000123456789");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(format_sig9(0.0), "0");
    }

    #[test]
    fn export_example_and_round_trip() {
        let t = table(Lang::X, &["a"], 2, vec![0.5, -0.25]);
        let mut buf = Vec::new();
        write_embeddings(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1 2\na 0.5 -0.25\n");

        let t = table(Lang::Y, &["x", "ÿ", "z"], 2, vec![0.123456789012, -7.5, 1e-9, 2.0, 3.25, -0.1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        export_embeddings(&t, &path).unwrap();
        let back = read_embeddings(&path, Lang::Y).unwrap();
        assert_eq!(back.vocab.words(), t.vocab.words());
        for (a, b) in back.vectors.as_slice().iter().zip(t.vectors.as_slice()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-30));
        }
    }
}
