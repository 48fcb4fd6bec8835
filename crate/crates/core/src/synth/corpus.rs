//! A pronounceable pseudo-language used as the desk-scale word corpus.
//!
//! Words are built from weighted onset/vowel/coda syllables with optional
//! suffixes, so N-gram statistics are skewed the way natural text is. A small
//! share of tokens are numbers or letter/digit mixes so every symbol occurs.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::lexicon::{Alphabet, Corpus};
use crate::rng::{rng_from_seed, Rng};

const ONSETS: &[(&str, u32)] = &[
    ("", 6),
    ("b", 4),
    ("c", 4),
    ("d", 4),
    ("f", 3),
    ("g", 3),
    ("h", 3),
    ("j", 1),
    ("k", 2),
    ("l", 4),
    ("m", 4),
    ("n", 4),
    ("p", 4),
    ("qu", 1),
    ("r", 4),
    ("s", 5),
    ("t", 5),
    ("v", 2),
    ("w", 2),
    ("x", 1),
    ("y", 1),
    ("z", 1),
    ("br", 1),
    ("cr", 1),
    ("dr", 1),
    ("fr", 1),
    ("gr", 1),
    ("pr", 2),
    ("tr", 2),
    ("bl", 1),
    ("cl", 1),
    ("fl", 1),
    ("gl", 1),
    ("pl", 1),
    ("sl", 1),
    ("st", 2),
    ("sp", 1),
    ("sk", 1),
    ("sh", 2),
    ("ch", 2),
    ("th", 2),
    ("wh", 1),
    ("sm", 1),
    ("sn", 1),
];

const VOWELS: &[(&str, u32)] = &[
    ("a", 8),
    ("e", 9),
    ("i", 7),
    ("o", 6),
    ("u", 3),
    ("ai", 1),
    ("ea", 2),
    ("ee", 1),
    ("oo", 1),
    ("ou", 2),
    ("io", 1),
    ("y", 1),
];

const CODAS: &[(&str, u32)] = &[
    ("", 12),
    ("n", 4),
    ("r", 4),
    ("s", 3),
    ("t", 3),
    ("l", 3),
    ("m", 2),
    ("nd", 1),
    ("st", 1),
    ("nt", 1),
    ("ck", 1),
    ("ng", 1),
    ("x", 1),
    ("rd", 1),
    ("ll", 1),
    ("ss", 1),
    ("k", 1),
    ("p", 1),
    ("z", 1),
];

const SUFFIXES: &[(&str, u32)] = &[
    ("", 20),
    ("ing", 3),
    ("er", 3),
    ("ed", 3),
    ("ly", 2),
    ("tion", 2),
    ("s", 4),
    ("est", 1),
    ("ment", 1),
    ("able", 1),
];

const MAX_TOKEN_LEN: usize = 14;

fn pick<'a>(rng: &mut Rng, table: &[(&'a str, u32)]) -> &'a str {
    let total: u32 = table.iter().map(|&(_, w)| w).sum();
    let mut r = rng.random_range(0..total);
    for &(s, w) in table {
        if r < w {
            return s;
        }
        r -= w;
    }
    unreachable!("weights sum to total")
}

fn pseudo_word(rng: &mut Rng, buf: &mut Vec<u8>) {
    buf.clear();
    let syllables = match rng.random_range(0..10) {
        0..=2 => 1,
        3..=7 => 2,
        _ => 3,
    };
    for _ in 0..syllables {
        buf.extend_from_slice(pick(rng, ONSETS).as_bytes());
        buf.extend_from_slice(pick(rng, VOWELS).as_bytes());
        buf.extend_from_slice(pick(rng, CODAS).as_bytes());
    }
    buf.extend_from_slice(pick(rng, SUFFIXES).as_bytes());
}

fn numeric_token(rng: &mut Rng, buf: &mut Vec<u8>) {
    buf.clear();
    let digits = |rng: &mut Rng, buf: &mut Vec<u8>, n: usize| {
        for _ in 0..n {
            buf.push(b'0' + rng.random_range(0..10u8));
        }
    };
    match rng.random_range(0..3) {
        0 => {
            let n = rng.random_range(1..=4);
            digits(rng, buf, n);
        }
        1 => {
            for _ in 0..rng.random_range(1..=2) {
                buf.push(b'a' + rng.random_range(0..26u8));
            }
            let n = rng.random_range(1..=3);
            digits(rng, buf, n);
        }
        _ => {
            let n = rng.random_range(1..=3);
            digits(rng, buf, n);
            buf.extend_from_slice(
                pick(rng, &[("th", 2), ("st", 1), ("nd", 1), ("s", 1)]).as_bytes(),
            );
        }
    }
}

/// `count` distinct pseudo-words, deterministic in `seed`. About one token in
/// sixteen is numeric or alphanumeric.
pub fn pseudo_corpus(seed: u64, count: usize) -> Corpus {
    let mut rng = rng_from_seed(seed);
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(count);
    let mut buf = Vec::new();
    while words.len() < count {
        if rng.random_range(0..16) == 0 {
            numeric_token(&mut rng, &mut buf);
        } else {
            pseudo_word(&mut rng, &mut buf);
        }
        if buf.len() > MAX_TOKEN_LEN {
            continue;
        }
        let text = core::str::from_utf8(&buf).expect("ascii");
        let word = Alphabet
            .encode_word(text, MAX_TOKEN_LEN)
            .expect("non-empty ascii");
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    Corpus::new(words, "pseudo").expect("count > 0")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{build_vocab, collision_count, encode_bag, NUM_SYMBOLS};

    #[test]
    fn deterministic_and_unique() {
        let a = pseudo_corpus(1, 500);
        assert_eq!(a, pseudo_corpus(1, 500));
        let set: BTreeSet<_> = a.words().iter().collect();
        assert_eq!(set.len(), 500);
        assert!(a.words().iter().all(|w| w.len() <= MAX_TOKEN_LEN));
    }

    #[test]
    fn covers_alphabet() {
        let corpus = pseudo_corpus(7, 2000);
        let vocab = build_vocab(&corpus, 4, 2).unwrap();
        let hist = vocab.order_histogram();
        assert_eq!(hist[0], NUM_SYMBOLS);
        assert!(hist[1] > 200 && hist[3] > 0, "{hist:?}");
    }

    #[test]
    fn bags_are_sparse_and_nearly_unique() {
        let corpus = pseudo_corpus(3, 2000);
        let vocab = build_vocab(&corpus, 4, 1).unwrap();
        let mean = corpus
            .words()
            .iter()
            .map(|w| encode_bag(w, &vocab).len())
            .sum::<usize>() as f64
            / corpus.len() as f64;
        assert!((8.0..40.0).contains(&mean), "mean bag size {mean}");
        assert!(collision_count(corpus.words(), &vocab) * 200 < 2000);
    }
}
