//! Text ingestion: tokenization, vocabularies, sparse bags of words, merged
//! mini-batches and tf-idf statistics.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Lowercases, splits on Unicode whitespace and strips leading and trailing
/// punctuation from each token. Tokens left empty are dropped.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.to_lowercase())
        .collect()
}

/// Word/document counts gathered from one shard of a corpus.
///
/// Shards can be counted independently and combined with [`VocabCounts::merge`]
/// before a single call to [`VocabCounts::finish`].
#[derive(Debug, Clone, Default)]
pub struct VocabCounts {
    freq: HashMap<String, u64>,
    doc_freq: HashMap<String, u64>,
    docs: u64,
}

impl VocabCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document<S: AsRef<str>>(&mut self, tokens: &[S]) {
        self.docs += 1;
        let mut seen: Vec<&str> = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let tok = tok.as_ref();
            *self.freq.entry(tok.to_owned()).or_insert(0) += 1;
            seen.push(tok);
        }
        seen.sort_unstable();
        seen.dedup();
        for tok in seen {
            *self.doc_freq.entry(tok.to_owned()).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: VocabCounts) {
        self.docs += other.docs;
        for (w, n) in other.freq {
            *self.freq.entry(w).or_insert(0) += n;
        }
        for (w, n) in other.doc_freq {
            *self.doc_freq.entry(w).or_insert(0) += n;
        }
    }

    pub fn finish(self, max_size: Option<usize>, min_count: u64) -> Result<Vocabulary> {
        let mut entries: Vec<(String, u64)> = self
            .freq
            .into_iter()
            .filter(|(_, n)| *n >= min_count)
            .collect();
        entries.sort_by(|(wa, na), (wb, nb)| nb.cmp(na).then_with(|| wa.cmp(wb)));
        if let Some(max) = max_size {
            entries.truncate(max);
        }
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let doc_freq = entries
            .iter()
            .map(|(w, _)| self.doc_freq.get(w).copied().unwrap_or(0))
            .collect();
        let (words, freq): (Vec<String>, Vec<u64>) = entries.into_iter().unzip();
        Vocabulary::from_parts(words, freq, doc_freq, self.docs)
    }
}

/// Builds a vocabulary where every token stream counts as one document.
pub fn build_vocabulary<I, S>(streams: I, max_size: Option<usize>, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator,
    I::Item: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut counts = VocabCounts::new();
    for stream in streams {
        counts.add_document(stream.as_ref());
    }
    counts.finish(max_size, min_count)
}

/// Bidirectional word/index map with corpus frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    freq: Vec<u64>,
    doc_freq: Vec<u64>,
    doc_count: u64,
}

impl Vocabulary {
    pub fn from_parts(words: Vec<String>, freq: Vec<u64>, doc_freq: Vec<u64>, doc_count: u64) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if freq.len() != words.len() || doc_freq.len() != words.len() {
            return Err(Error::Shape("vocabulary column lengths differ".into()));
        }
        if let Some(df) = doc_freq.iter().find(|&&df| df > doc_count) {
            return Err(Error::invalid(format!(
                "document frequency {df} exceeds document count {doc_count}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary {
            words,
            index,
            freq,
            doc_freq,
            doc_count,
        })
    }

    /// A vocabulary carrying only word identities (frequencies zero).
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let n = words.len();
        Self::from_parts(words, vec![0; n], vec![0; n], 0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn freq(&self, i: usize) -> u64 {
        self.freq[i]
    }

    pub fn doc_freq(&self, i: usize) -> u64 {
        self.doc_freq[i]
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    /// Writes the `#vocab v1` TSV format.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "#vocab v1 N={}", self.doc_count)?;
        for i in 0..self.len() {
            writeln!(out, "{}\t{}\t{}", self.words[i], self.freq[i], self.doc_freq[i])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })??;
        let n = header
            .strip_prefix("#vocab v1 N=")
            .and_then(|n| n.trim().parse::<u64>().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("bad vocabulary header {header:?}"),
            })?;
        let (mut words, mut freq, mut doc_freq) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let lineno = lineno + 2;
            let mut fields = line.split('\t');
            let parse_err = |msg: &str| Error::Parse {
                line: lineno,
                msg: msg.to_owned(),
            };
            let word = fields.next().ok_or_else(|| parse_err("missing word"))?;
            let f = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad frequency"))?;
            let df = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad document frequency"))?;
            words.push(word.to_owned());
            freq.push(f);
            doc_freq.push(df);
        }
        Vocabulary::from_parts(words, freq, doc_freq, n)
    }
}

/// Sparse multiset of word indices. Entries are kept sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BagOfWords {
    entries: Vec<(u32, u32)>,
    total: u64,
}

impl BagOfWords {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a bag from `(index, count)` pairs; repeated indices are summed
    /// and zero counts ignored.
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(counts: I) -> Self {
        let mut entries: Vec<(u32, u32)> = counts
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(i, n)| (i as u32, n))
            .collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(entries.len());
        for (i, n) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += n,
                _ => merged.push((i, n)),
            }
        }
        let total = merged.iter().map(|&(_, n)| n as u64).sum();
        BagOfWords {
            entries: merged,
            total,
        }
    }

    /// Bag with count one for each listed index (duplicates accumulate).
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        Self::from_counts(indices.into_iter().map(|i| (i, 1)))
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|&(i, n)| (i as usize, n))
    }

    /// Binary view: the distinct word indices.
    pub fn indices(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i as usize)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.entries
            .binary_search_by_key(&(index as u32), |&(i, _)| i)
            .is_ok()
    }

    pub fn count(&self, index: usize) -> u32 {
        self.entries
            .binary_search_by_key(&(index as u32), |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    /// Number of distinct words.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    /// Sum of counts, `|x|`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i as usize)
    }

    pub fn check_range(&self, vocab_size: usize) -> Result<()> {
        match self.max_index() {
            Some(i) if i >= vocab_size => Err(Error::IndexOutOfRange {
                index: i,
                size: vocab_size,
            }),
            _ => Ok(()),
        }
    }

    /// Count-wise sum of two bags.
    pub fn union(&self, other: &BagOfWords) -> BagOfWords {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(ia, na)), Some(&&(ib, nb))) => {
                    if ia < ib {
                        out.push((ia, na));
                        a.next();
                    } else if ib < ia {
                        out.push((ib, nb));
                        b.next();
                    } else {
                        out.push((ia, na + nb));
                        a.next();
                        b.next();
                    }
                }
                (Some(&&e), None) => {
                    out.push(e);
                    a.next();
                }
                (None, Some(&&e)) => {
                    out.push(e);
                    b.next();
                }
                (None, None) => break,
            }
        }
        BagOfWords {
            entries: out,
            total: self.total + other.total,
        }
    }

    /// Same bag with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> BagOfWords {
        BagOfWords::from_counts(self.entries().map(|(i, n)| (i, n * factor)))
    }
}

/// Maps tokens onto vocabulary indices; out-of-vocabulary tokens are skipped.
pub fn to_bow<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> BagOfWords {
    BagOfWords::from_indices(tokens.iter().filter_map(|t| vocab.get(t.as_ref())))
}

/// A sentence and its translation as bags over their own vocabularies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub src: BagOfWords,
    pub tgt: BagOfWords,
}

impl AlignedPair {
    pub fn new(src: BagOfWords, tgt: BagOfWords) -> Self {
        AlignedPair { src, tgt }
    }
}

/// Aligned pairs plus the number of lines dropped because a side was empty
/// after preprocessing.
#[derive(Debug, Clone, Default)]
pub struct AlignedCorpus {
    pub pairs: Vec<AlignedPair>,
    pub dropped: usize,
}

/// Pairs up tokenized sentences line by line.
pub fn align_pairs<S: AsRef<str>>(
    src: &[Vec<S>],
    tgt: &[Vec<S>],
    vocab_x: &Vocabulary,
    vocab_y: &Vocabulary,
) -> Result<AlignedCorpus> {
    if src.len() != tgt.len() {
        return Err(Error::invalid(format!(
            "aligned corpus line counts differ: {} source vs {} target",
            src.len(),
            tgt.len()
        )));
    }
    let mut corpus = AlignedCorpus::default();
    for (s, t) in src.iter().zip(tgt) {
        let (bx, by) = (to_bow(s, vocab_x), to_bow(t, vocab_y));
        if bx.is_empty() || by.is_empty() {
            corpus.dropped += 1;
        } else {
            corpus.pairs.push(AlignedPair::new(bx, by));
        }
    }
    Ok(corpus)
}

/// Sums consecutive runs of `k` bags into one bag each. A trailing partial
/// run is merged as well.
pub fn merge_minibatch(bags: &[BagOfWords], k: usize) -> Result<Vec<BagOfWords>> {
    if k < 1 {
        return Err(Error::invalid("merge size must be at least 1"));
    }
    Ok(bags
        .chunks(k)
        .map(|run| run.iter().skip(1).fold(run[0].clone(), |acc, b| acc.union(b)))
        .collect())
}

/// [`merge_minibatch`] applied to both sides of a parallel corpus with the
/// same grouping.
pub fn merge_pairs(pairs: &[AlignedPair], k: usize) -> Result<Vec<AlignedPair>> {
    if k < 1 {
        return Err(Error::invalid("merge size must be at least 1"));
    }
    Ok(pairs
        .chunks(k)
        .map(|run| {
            run.iter().skip(1).fold(run[0].clone(), |acc, p| {
                AlignedPair::new(acc.src.union(&p.src), acc.tgt.union(&p.tgt))
            })
        })
        .collect())
}

/// Inverse document frequencies, `idf[i] = ln((1 + N) / (1 + df[i]))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfStats {
    pub idf: Vec<f64>,
    pub doc_count: usize,
}

impl TfIdfStats {
    pub fn from_doc_freq(doc_freq: &[u64], doc_count: usize) -> Self {
        let n = doc_count as f64;
        let idf = doc_freq
            .iter()
            .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln())
            .collect();
        TfIdfStats { idf, doc_count }
    }

    /// tf-idf weight of a word occurring `count` times.
    pub fn weight(&self, index: usize, count: u32) -> f64 {
        count as f64 * self.idf[index]
    }
}

pub fn compute_tfidf(docs: &[BagOfWords], vocab: &Vocabulary) -> Result<TfIdfStats> {
    compute_tfidf_sized(docs, vocab.len())
}

pub fn compute_tfidf_sized(docs: &[BagOfWords], vocab_size: usize) -> Result<TfIdfStats> {
    if docs.is_empty() {
        return Err(Error::invalid("tf-idf needs at least one document"));
    }
    let mut df = vec![0u64; vocab_size];
    for doc in docs {
        doc.check_range(vocab_size)?;
        for i in doc.indices() {
            df[i] += 1;
        }
    }
    Ok(TfIdfStats::from_doc_freq(&df, docs.len()))
}

/// A labeled document line: `label<TAB>text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDoc {
    pub label: String,
    pub text: String,
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    reader.lines().map(|l| l.map_err(Error::from)).collect()
}

pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_lines(path)?.iter().map(|l| tokenize(l)).collect())
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledDoc>> {
    let mut docs = Vec::new();
    for (lineno, line) in read_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: "expected label<TAB>text".into(),
        })?;
        docs.push(LabeledDoc {
            label: label.to_owned(),
            text: text.to_owned(),
        });
    }
    Ok(docs)
}

pub fn write_labeled(path: &Path, docs: &[LabeledDoc]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for d in docs {
        writeln!(out, "{}\t{}", d.label, d.text)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn streams() -> Vec<Vec<String>> {
        vec![toks(&["a", "b", "a"]), toks(&["b", "c"])]
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The dog barked."), toks(&["the", "dog", "barked"]));
        assert_eq!(tokenize("le chien a jappé"), toks(&["le", "chien", "a", "jappé"]));
        assert!(tokenize("  ...  ").is_empty());
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("«Président-in-office», 1999!"), toks(&["président-in-office", "1999"]));
    }

    #[test]
    fn vocabulary_order_and_filters() {
        let v = build_vocabulary(streams(), None, 1).unwrap();
        assert_eq!(v.words(), &toks(&["a", "b", "c"])[..]);
        assert_eq!(v.freq(0), 2);
        assert_eq!(v.doc_freq(0), 1);
        assert_eq!(v.doc_freq(1), 2);
        assert_eq!(v.doc_count(), 2);

        let v = build_vocabulary(streams(), None, 2).unwrap();
        assert_eq!(v.words(), &toks(&["a", "b"])[..]);

        let v = build_vocabulary(streams(), Some(1), 1).unwrap();
        assert_eq!(v.words(), &toks(&["a"])[..]);

        assert!(matches!(
            build_vocabulary(streams(), None, 5),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn sharded_counts_match_single_pass() {
        let s = streams();
        let mut a = VocabCounts::new();
        a.add_document(&s[0]);
        let mut b = VocabCounts::new();
        b.add_document(&s[1]);
        a.merge(b);
        assert_eq!(a.finish(None, 1).unwrap(), build_vocabulary(s, None, 1).unwrap());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = build_vocabulary(streams(), None, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tsv");
        v.write_tsv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "#vocab v1 N=2\na\t2\t1\nb\t2\t2\nc\t1\t1\n");
        assert_eq!(Vocabulary::read_tsv(&path).unwrap(), v);
    }

    #[test]
    fn to_bow_examples() {
        let v = Vocabulary::from_words(toks(&["a", "b", "c"])).unwrap();
        let bag = to_bow(&toks(&["a", "b", "a"]), &v);
        assert_eq!(bag.entries().collect::<Vec<_>>(), vec![(0, 2), (1, 1)]);
        assert_eq!(bag.total(), 3);
        assert!(to_bow(&toks(&["z"]), &v).is_empty());
        let bag = to_bow(&toks(&["c"]), &v);
        assert_eq!(bag.entries().collect::<Vec<_>>(), vec![(2, 1)]);
        assert_eq!(bag.total(), 1);
    }

    #[test]
    fn merge_examples() {
        let bags = vec![BagOfWords::from_indices([0, 2]), BagOfWords::from_indices([1, 2])];
        let merged = merge_minibatch(&bags, 2).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].entries().collect::<Vec<_>>(), vec![(0, 1), (1, 1), (2, 2)]);
        assert_eq!(merged[0].indices().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(merge_minibatch(&bags, 1).unwrap(), bags);
        assert!(merge_minibatch(&bags, 0).is_err());
        // partial trailing run
        let three = vec![bags[0].clone(), bags[1].clone(), bags[0].clone()];
        assert_eq!(merge_minibatch(&three, 2).unwrap().len(), 2);
    }

    #[test]
    fn merge_pairs_keeps_alignment() {
        let pairs: Vec<AlignedPair> = (0..7)
            .map(|i| AlignedPair::new(BagOfWords::from_indices([i]), BagOfWords::from_indices([10 + i])))
            .collect();
        let merged = merge_pairs(&pairs, 3).unwrap();
        assert_eq!(merged.len(), 3);
        assert_eq!(merged[1].src.indices().collect::<Vec<_>>(), vec![3, 4, 5]);
        assert_eq!(merged[1].tgt.indices().collect::<Vec<_>>(), vec![13, 14, 15]);
        assert_eq!(merged[2].tgt.indices().collect::<Vec<_>>(), vec![16]);
    }

    #[test]
    fn align_pairs_drops_empty_sides() {
        let vx = Vocabulary::from_words(toks(&["a"])).unwrap();
        let vy = Vocabulary::from_words(toks(&["b"])).unwrap();
        let src = vec![toks(&["a"]), toks(&["zz"]), toks(&["a"])];
        let tgt = vec![toks(&["b"]), toks(&["b"]), toks(&["qq"])];
        let c = align_pairs(&src, &tgt, &vx, &vy).unwrap();
        assert_eq!(c.pairs.len(), 1);
        assert_eq!(c.dropped, 2);
        assert!(align_pairs(&src[..2], &tgt, &vx, &vy).is_err());
    }

    #[test]
    fn tfidf_examples() {
        let docs = vec![BagOfWords::from_indices([0]), BagOfWords::from_indices([0, 1])];
        let stats = compute_tfidf_sized(&docs, 3).unwrap();
        // frozen from direct evaluation of ln((1+N)/(1+df))
        assert!((stats.idf[0] - 0.0).abs() < 1e-15);
        assert!((stats.idf[1] - 0.405_465_108_108_164_4).abs() < 1e-12);
        assert!((stats.idf[2] - 1.098_612_288_668_109_8).abs() < 1e-12);
        assert!(compute_tfidf_sized(&[], 3).is_err());
    }

    fn arb_bag() -> impl Strategy<Value = BagOfWords> {
        proptest::collection::vec((0usize..30, 1u32..4), 0..12).prop_map(BagOfWords::from_counts)
    }

    proptest! {
        #[test]
        fn to_bow_is_order_invariant(mut words in proptest::collection::vec("[a-e]{1,2}", 0..20), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let vocab = build_vocabulary([vec!["a", "b", "c", "aa", "bb"]], None, 1).unwrap();
            let before = to_bow(&words, &vocab);
            words.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, to_bow(&words, &vocab));
        }

        #[test]
        fn merge_preserves_mass(bags in proptest::collection::vec(arb_bag(), 1..20), k in 1usize..6) {
            let before: u64 = bags.iter().map(BagOfWords::total).sum();
            let merged = merge_minibatch(&bags, k).unwrap();
            prop_assert_eq!(merged.len(), bags.len().div_ceil(k));
            prop_assert_eq!(before, merged.iter().map(BagOfWords::total).sum::<u64>());
            prop_assert_eq!(merge_minibatch(&bags, 1).unwrap(), bags);
        }

        #[test]
        fn idf_non_increasing_in_df(n in 1usize..1000, a in 0u64..1000, b in 0u64..1000) {
            let (lo, hi) = (a.min(b).min(n as u64), a.max(b).min(n as u64));
            let s = TfIdfStats::from_doc_freq(&[lo, hi], n);
            prop_assert!(s.idf[0] >= s.idf[1]);
            prop_assert!(s.idf[1] >= 0.0 && s.idf[0].is_finite());
        }
    }
}
