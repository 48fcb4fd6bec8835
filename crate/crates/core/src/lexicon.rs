//! Alphabet, words and the bag-of-N-grams encoding.
//!
//! Characters are class indices: digits `0-9` are classes 0..=9, letters
//! `a-z` are 10..=35 and class 36 is the null padding class. Because digits
//! sort before letters in ASCII too, the derived ordering on [`Word`] and
//! [`Gram`] is plain lexicographic order on the rendered strings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;
use thiserror::Error;

/// Number of real symbols (10 digits + 26 letters).
pub const NUM_SYMBOLS: usize = 36;
/// Number of classes per position including null.
pub const NUM_CLASSES: usize = 37;
/// Class index of the null padding character.
pub const NULL_CLASS: u8 = 36;
/// Default maximum modelled word length.
pub const DEFAULT_MAX_LEN: usize = 23;
/// Longest N-gram order a [`Gram`] can hold.
pub const MAX_GRAM_ORDER: usize = 8;

const SYMBOLS: &[u8; NUM_SYMBOLS] = b"0123456789abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("word is empty after removing non-alphanumeric characters")]
    EmptyWord,
    #[error("word has {len} characters, more than the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("class index {0} is not a symbol")]
    BadClass(u8),
    #[error("no N-gram reaches the minimum count")]
    EmptyVocab,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid N-gram order {0}")]
    BadOrder(usize),
    #[error("invalid vocabulary: {0}")]
    BadVocab(&'static str),
}

/// The fixed 36-symbol alphabet plus null.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Alphabet;

impl Alphabet {
    pub const fn null_index(&self) -> u8 {
        NULL_CLASS
    }

    pub fn symbols(&self) -> &'static [u8; NUM_SYMBOLS] {
        SYMBOLS
    }

    /// Class index of an ASCII alphanumeric character, case-folded.
    pub fn index_of(&self, ch: char) -> Option<u8> {
        match ch {
            '0'..='9' => Some(ch as u8 - b'0'),
            'a'..='z' => Some(ch as u8 - b'a' + 10),
            'A'..='Z' => Some(ch as u8 - b'A' + 10),
            _ => None,
        }
    }

    /// Character for a class index; the null class renders as `_`.
    pub fn symbol(&self, class: u8) -> char {
        match SYMBOLS.get(class as usize) {
            Some(&b) => b as char,
            None => '_',
        }
    }

    /// Lowercases `text`, drops everything outside `[0-9A-Za-z]` and maps the
    /// rest to class indices.
    pub fn encode_word(&self, text: &str, max_len: usize) -> Result<Word, LexiconError> {
        let chars: Vec<u8> = text.chars().filter_map(|c| self.index_of(c)).collect();
        if chars.is_empty() {
            return Err(LexiconError::EmptyWord);
        }
        if chars.len() > max_len {
            return Err(LexiconError::TooLong {
                len: chars.len(),
                max: max_len,
            });
        }
        Ok(Word(chars))
    }
}

/// Convenience wrapper for [`Alphabet::encode_word`].
pub fn encode_word(text: &str, max_len: usize) -> Result<Word, LexiconError> {
    Alphabet.encode_word(text, max_len)
}

/// A non-empty sequence of symbol classes (never containing null).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn from_classes(classes: Vec<u8>) -> Result<Self, LexiconError> {
        if classes.is_empty() {
            return Err(LexiconError::EmptyWord);
        }
        if let Some(&bad) = classes.iter().find(|&&c| c as usize >= NUM_SYMBOLS) {
            return Err(LexiconError::BadClass(bad));
        }
        Ok(Word(classes))
    }

    pub fn classes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Class at padded position `i`: the character, or null past the end.
    pub fn padded_class(&self, i: usize) -> u8 {
        self.0.get(i).copied().unwrap_or(NULL_CLASS)
    }

    /// The word padded with nulls to `max_len` classes.
    pub fn padded(&self, max_len: usize) -> Vec<u8> {
        (0..max_len).map(|i| self.padded_class(i)).collect()
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|&c| Alphabet.symbol(c)).collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &c in &self.0 {
            write!(f, "{}", Alphabet.symbol(c))?;
        }
        Ok(())
    }
}

/// A packed N-gram of up to [`MAX_GRAM_ORDER`] symbols.
///
/// Layout: bits 48..52 hold the length, and symbol `j` sits in the 6-bit slot
/// starting at bit `42 - 6j`, stored as `class + 1`. Numeric order of the
/// packed value is therefore (length, lexicographic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gram(u64);

impl Gram {
    pub fn new(classes: &[u8]) -> Option<Self> {
        if classes.is_empty() || classes.len() > MAX_GRAM_ORDER {
            return None;
        }
        let mut key = (classes.len() as u64) << 48;
        for (j, &c) in classes.iter().enumerate() {
            if c as usize >= NUM_SYMBOLS {
                return None;
            }
            key |= (c as u64 + 1) << (42 - 6 * j);
        }
        Some(Gram(key))
    }

    /// Parses a lowercase alphanumeric string.
    pub fn parse(text: &str) -> Option<Self> {
        let mut classes = Vec::with_capacity(text.len());
        for ch in text.chars() {
            if ch.is_ascii_uppercase() {
                return None;
            }
            classes.push(Alphabet.index_of(ch)?);
        }
        Gram::new(&classes)
    }

    pub fn len(self) -> usize {
        ((self.0 >> 48) & 0xf) as usize
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn class_at(self, j: usize) -> u8 {
        (((self.0 >> (42 - 6 * j)) & 0x3f) as u8) - 1
    }

    pub fn classes(self) -> Vec<u8> {
        (0..self.len()).map(|j| self.class_at(j)).collect()
    }

    pub fn to_text(self) -> String {
        (0..self.len())
            .map(|j| Alphabet.symbol(self.class_at(j)))
            .collect()
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Gram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            write!(f, "{}", Alphabet.symbol(self.class_at(j)))?;
        }
        Ok(())
    }
}

/// Calls `visit` once per (start position, length) substring of `classes`
/// with length at most `order`. Duplicated substrings are visited repeatedly.
pub fn for_each_occurrence(classes: &[u8], order: usize, mut visit: impl FnMut(Gram)) {
    for start in 0..classes.len() {
        let longest = order.min(classes.len() - start).min(MAX_GRAM_ORDER);
        for n in 1..=longest {
            if let Some(g) = Gram::new(&classes[start..start + n]) {
                visit(g);
            }
        }
    }
}

/// The set of all substrings of `word` of length at most `order`.
pub fn ngrams_of(word: &Word, order: usize) -> BTreeSet<Gram> {
    let mut set = BTreeSet::new();
    for_each_occurrence(word.classes(), order, |g| {
        set.insert(g);
    });
    set
}

/// A list of words with a provenance tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    words: Vec<Word>,
    source: String,
}

impl Corpus {
    pub fn new(words: Vec<Word>, source: impl Into<String>) -> Result<Self, LexiconError> {
        if words.is_empty() {
            return Err(LexiconError::EmptyCorpus);
        }
        Ok(Corpus {
            words,
            source: source.into(),
        })
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The modelled N-gram set with occurrence counts and loss weights.
#[derive(Debug, Clone)]
pub struct NGramVocab {
    order: usize,
    entries: Vec<Gram>,
    counts: Vec<u64>,
    weights: Vec<f64>,
    index: HashMap<Gram, u32>,
}

impl PartialEq for NGramVocab {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.entries == other.entries
            && self.counts == other.counts
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub const MIN_WEIGHT: f64 = 0.01;
pub const MAX_WEIGHT: f64 = 100.0;

impl NGramVocab {
    /// Assembles a vocabulary from stored parts, checking every invariant.
    pub fn from_parts(
        order: usize,
        entries: Vec<Gram>,
        counts: Vec<u64>,
        weights: Vec<f64>,
    ) -> Result<Self, LexiconError> {
        if order == 0 || order > MAX_GRAM_ORDER {
            return Err(LexiconError::BadOrder(order));
        }
        if entries.len() != counts.len() || entries.len() != weights.len() {
            return Err(LexiconError::BadVocab("column lengths differ"));
        }
        if entries.is_empty() {
            return Err(LexiconError::EmptyVocab);
        }
        if entries.iter().any(|g| g.len() > order) {
            return Err(LexiconError::BadVocab("entry longer than the order"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(LexiconError::BadVocab(
                "weights must be finite and positive",
            ));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, &g) in entries.iter().enumerate() {
            if index.insert(g, i as u32).is_some() {
                return Err(LexiconError::BadVocab("duplicate entry"));
            }
        }
        Ok(NGramVocab {
            order,
            entries,
            counts,
            weights,
            index,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Gram] {
        &self.entries
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, gram: Gram) -> Option<usize> {
        self.index.get(&gram).map(|&i| i as usize)
    }

    /// Number of entries of each order, index 0 holding 1-grams.
    pub fn order_histogram(&self) -> Vec<usize> {
        let mut hist = alloc::vec![0; self.order];
        for g in &self.entries {
            hist[g.len() - 1] += 1;
        }
        hist
    }
}

/// Counts every N-gram occurrence (one per start position per word) and keeps
/// those seen at least `min_count` times.
pub fn build_vocab(
    corpus: &Corpus,
    order: usize,
    min_count: u64,
) -> Result<NGramVocab, LexiconError> {
    if order == 0 || order > MAX_GRAM_ORDER {
        return Err(LexiconError::BadOrder(order));
    }
    let mut counts: BTreeMap<Gram, u64> = BTreeMap::new();
    for word in corpus.words() {
        for_each_occurrence(word.classes(), order, |g| {
            *counts.entry(g).or_insert(0) += 1;
        });
    }
    let min_count = min_count.max(1);
    let kept: Vec<(Gram, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    if kept.is_empty() {
        return Err(LexiconError::EmptyVocab);
    }
    let mean = kept.iter().map(|&(_, c)| c as f64).sum::<f64>() / kept.len() as f64;
    let weights = kept
        .iter()
        .map(|&(_, c)| (mean / c as f64).clamp(MIN_WEIGHT, MAX_WEIGHT))
        .collect();
    let (entries, counts) = kept.into_iter().unzip();
    NGramVocab::from_parts(order, entries, counts, weights)
}

/// Sorted indices of the vocabulary entries occurring in `word`.
///
/// N-grams of the word that the vocabulary does not model are dropped.
pub fn encode_bag(word: &Word, vocab: &NGramVocab) -> Vec<u32> {
    let mut bits: Vec<u32> = Vec::new();
    for_each_occurrence(word.classes(), vocab.order(), |g| {
        if let Some(i) = vocab.get(g) {
            bits.push(i as u32);
        }
    });
    bits.sort_unstable();
    bits.dedup();
    bits
}

/// Dense 0/1 form of [`encode_bag`].
pub fn encode_bag_dense(word: &Word, vocab: &NGramVocab) -> Vec<u8> {
    let mut dense = alloc::vec![0u8; vocab.len()];
    for i in encode_bag(word, vocab) {
        dense[i as usize] = 1;
    }
    dense
}

/// Number of unordered word pairs that share an identical bag encoding.
pub fn collision_count(words: &[Word], vocab: &NGramVocab) -> u64 {
    let mut groups: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    for w in words {
        *groups.entry(encode_bag(w, vocab)).or_insert(0) += 1;
    }
    groups.values().map(|&k| k * k.saturating_sub(1) / 2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn w(s: &str) -> Word {
        encode_word(s, DEFAULT_MAX_LEN).unwrap()
    }

    fn corpus(words: &[&str]) -> Corpus {
        Corpus::new(words.iter().map(|s| w(s)).collect(), "test").unwrap()
    }

    fn grams(set: &BTreeSet<Gram>) -> Vec<String> {
        set.iter().map(|g| g.to_text()).collect()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(w("Camel").classes(), &[12, 10, 22, 14, 21]);
        assert_eq!(w("7").classes(), &[7]);
        // strip '!' then map: x=33, y=34
        assert_eq!(w("x!y").classes(), &[33, 34]);
        assert_eq!(w("Camel").to_text(), "camel");
    }

    #[test]
    fn encode_errors() {
        assert_eq!(encode_word("!?-", 23), Err(LexiconError::EmptyWord));
        assert_eq!(encode_word("", 23), Err(LexiconError::EmptyWord));
        assert_eq!(
            encode_word("abcd", 3),
            Err(LexiconError::TooLong { len: 4, max: 3 })
        );
    }

    #[test]
    fn alphabet_bijection() {
        let a = Alphabet;
        for class in 0..NUM_SYMBOLS as u8 {
            assert_eq!(a.index_of(a.symbol(class)), Some(class));
        }
        assert_eq!(a.symbol(a.null_index()), '_');
        assert_eq!(a.index_of('_'), None);
    }

    #[test]
    fn word_rejects_null() {
        assert_eq!(
            Word::from_classes(vec![1, NULL_CLASS]),
            Err(LexiconError::BadClass(NULL_CLASS))
        );
        let word = w("ab");
        assert_eq!(word.padded(4), vec![10, 11, NULL_CLASS, NULL_CLASS]);
    }

    #[test]
    fn spires_trigram_set() {
        let set = ngrams_of(&w("spires"), 3);
        let mut expected = vec![
            "s", "p", "i", "r", "e", "sp", "pi", "ir", "re", "es", "spi", "pir", "ire", "res",
        ];
        expected.sort_by(|a, b| (a.len(), *a).cmp(&(b.len(), *b)));
        assert_eq!(set.len(), 14);
        assert_eq!(grams(&set), expected);
    }

    #[test]
    fn small_ngram_sets() {
        assert_eq!(grams(&ngrams_of(&w("a"), 4)), vec!["a"]);
        assert_eq!(grams(&ngrams_of(&w("aaa"), 2)), vec!["a", "aa"]);
    }

    #[test]
    fn gram_packing_orders_by_length_then_text() {
        let a = Gram::parse("zz").unwrap();
        let b = Gram::parse("aaa").unwrap();
        let c = Gram::parse("ab").unwrap();
        assert!(c < a && a < b);
        assert_eq!(Gram::parse("09az").unwrap().to_text(), "09az");
        assert_eq!(Gram::parse("Ab"), None);
        assert_eq!(Gram::new(&[]), None);
    }

    #[test]
    fn vocab_threshold_example() {
        let v = build_vocab(&corpus(&["ab", "ab", "ba"]), 2, 2).unwrap();
        let texts: Vec<String> = v.entries().iter().map(|g| g.to_text()).collect();
        assert_eq!(texts, vec!["a", "b", "ab"]);
        assert_eq!(v.counts(), &[3, 3, 2]);
        // mean = 8/3
        let mean = 8.0 / 3.0;
        assert_eq!(v.weights(), &[mean / 3.0, mean / 3.0, mean / 2.0]);
    }

    #[test]
    fn vocab_single_entry_weight_one() {
        let v = build_vocab(&corpus(&["a"]), 1, 1).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.weights(), &[1.0]);
    }

    #[test]
    fn vocab_counts_each_position() {
        let v = build_vocab(&corpus(&["aaa"]), 2, 1).unwrap();
        assert_eq!(v.counts(), &[3, 2]);
    }

    #[test]
    fn vocab_empty_and_bad_order() {
        assert_eq!(
            build_vocab(&corpus(&["ab"]), 2, 5).unwrap_err(),
            LexiconError::EmptyVocab
        );
        assert_eq!(
            build_vocab(&corpus(&["ab"]), 0, 1).unwrap_err(),
            LexiconError::BadOrder(0)
        );
    }

    #[test]
    fn weights_are_clamped() {
        let mut words = vec![w("q")];
        for _ in 0..5000 {
            words.push(w("e"));
        }
        let v = build_vocab(&Corpus::new(words, "t").unwrap(), 1, 1).unwrap();
        // mean = 2500.5; e: 0.5, q: 2500.5 -> 100
        assert_eq!(v.weights()[1], MAX_WEIGHT);
    }

    fn vocab_of(texts: &[&str], order: usize) -> NGramVocab {
        let entries: Vec<Gram> = texts.iter().map(|t| Gram::parse(t).unwrap()).collect();
        let n = entries.len();
        NGramVocab::from_parts(order, entries, vec![1; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn bag_examples() {
        let v = vocab_of(&["a", "b", "ab", "ba"], 2);
        assert_eq!(encode_bag_dense(&w("ab"), &v), vec![1, 1, 1, 0]);
        let v2 = vocab_of(&["a", "b"], 1);
        assert_eq!(encode_bag_dense(&w("z"), &v2), vec![0, 0]);
    }

    #[test]
    fn collision_examples() {
        let c = corpus(&["a", "b"]);
        let v = build_vocab(&c, 1, 1).unwrap();
        assert_eq!(collision_count(c.words(), &v), 0);
        let v = vocab_of(&["a", "b", "ab"], 2);
        assert_eq!(collision_count(&[w("ab"), w("aab")], &v), 1);
    }

    #[test]
    fn from_parts_rejects_duplicates() {
        let g = Gram::parse("a").unwrap();
        assert!(NGramVocab::from_parts(1, vec![g, g], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(NGramVocab::from_parts(1, vec![g], vec![1], vec![0.0]).is_err());
    }
}
