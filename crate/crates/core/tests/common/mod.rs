#![allow(dead_code)]

use proptest::prelude::*;

use wordcrf_core::lexicon::{Gram, NGramVocab, Word, NULL_CLASS, NUM_CLASSES, NUM_SYMBOLS};
use wordcrf_core::structured::{path_score, ScoreTables};

/// Unit-weight vocabulary over the given grams.
pub fn vocab_of(grams: &[&str], order: usize) -> NGramVocab {
    let mut entries: Vec<Gram> = grams
        .iter()
        .map(|g| Gram::parse(g).expect("gram"))
        .collect();
    entries.sort();
    let n = entries.len();
    NGramVocab::from_parts(order, entries, vec![1; n], vec![1.0; n]).expect("vocabulary")
}

/// Every gram over `symbols` of length `1..=order`.
pub fn all_grams(symbols: &[u8], order: usize) -> Vec<Gram> {
    all_strings(symbols, order)
        .into_iter()
        .map(|c| Gram::new(&c).expect("short gram"))
        .collect()
}

/// Every string over `symbols` of length `1..=max_len`, shortest first.
pub fn all_strings(symbols: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| symbols.iter().map(move |&s| [p.as_slice(), &[s]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

pub fn all_words(symbols: &[u8], max_len: usize) -> Vec<Word> {
    all_strings(symbols, max_len)
        .into_iter()
        .map(|c| Word::from_classes(c).expect("word"))
        .collect()
}

/// Best word by enumeration; the smaller word wins ties.
pub fn brute_force(words: &[Word], tables: &ScoreTables, vocab: &NGramVocab) -> (Word, f64) {
    let mut best: Option<(Word, f64)> = None;
    for w in words {
        let s = path_score(w, tables, vocab);
        if best
            .as_ref()
            .is_none_or(|(bw, bs)| s > *bs || (s == *bs && w < bw))
        {
            best = Some((w.clone(), s));
        }
    }
    best.expect("non-empty candidate set")
}

/// A decoding problem over a small alphabet. Symbols outside it carry a
/// large negative unary score so no optimal word uses them.
#[derive(Debug, Clone)]
pub struct Instance {
    pub symbols: Vec<u8>,
    pub vocab: NGramVocab,
    pub tables: ScoreTables,
}

impl Instance {
    pub fn words(&self) -> Vec<Word> {
        all_words(&self.symbols, self.tables.max_len())
    }
}

pub fn small_instance(
    max_symbols: usize,
    max_len: usize,
    max_order: usize,
) -> impl Strategy<Value = Instance> {
    (
        prop::sample::subsequence((0..NUM_SYMBOLS as u8).collect::<Vec<_>>(), 1..=max_symbols),
        1..=max_order,
        1..=max_len,
    )
        .prop_flat_map(|(symbols, order, len)| {
            let grams = all_grams(&symbols, order);
            let n = grams.len();
            (
                Just(symbols),
                Just(order),
                Just(grams),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(-2.0f64..2.0, len * NUM_CLASSES),
                prop::collection::vec(-2.0f64..2.0, n),
            )
        })
        .prop_map(|(symbols, order, grams, keep, mut unary, edge_all)| {
            let max_len = unary.len() / NUM_CLASSES;
            for (i, v) in unary.iter_mut().enumerate() {
                let c = (i % NUM_CLASSES) as u8;
                if c != NULL_CLASS && !symbols.contains(&c) {
                    *v = -1e3;
                }
            }
            let mut entries = Vec::new();
            let mut edge = Vec::new();
            for ((g, k), e) in grams.iter().zip(&keep).zip(&edge_all) {
                if *k || entries.is_empty() && g == grams.last().expect("grams") {
                    entries.push(*g);
                    edge.push(*e);
                }
            }
            let n = entries.len();
            let vocab = NGramVocab::from_parts(order, entries, vec![1; n], vec![1.0; n])
                .expect("vocabulary");
            let tables = ScoreTables::new(max_len, unary, edge).expect("finite");
            Instance {
                symbols,
                vocab,
                tables,
            }
        })
}

/// Random full-alphabet tables against a vocabulary of random grams.
pub fn full_tables(seed: u64, max_len: usize, vocab: &NGramVocab) -> ScoreTables {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let unary = (0..max_len * NUM_CLASSES)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let edge = (0..vocab.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    ScoreTables::new(max_len, unary, edge).expect("finite")
}

/// Every unigram plus a random third of the bigrams.
pub fn bigram_vocab(seed: u64) -> NGramVocab {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let symbols: Vec<u8> = (0..NUM_SYMBOLS as u8).collect();
    let entries: Vec<Gram> = all_grams(&symbols, 2)
        .into_iter()
        .filter(|g| g.len() == 1 || rng.random_bool(0.3))
        .collect();
    let n = entries.len();
    NGramVocab::from_parts(2, entries, vec![1; n], vec![1.0; n]).expect("vocabulary")
}

pub fn word(text: &str) -> Word {
    wordcrf_core::encode_word(text, 23).expect("word")
}
