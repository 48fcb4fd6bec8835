//! The CRF layer: path scores, decoders and the structured hinge loss.
//!
//! A word `w` padded with nulls to `max_len` scores
//!
//! ```text
//! S(w) = sum_i f[i][w_i] + sum over every substring s of w with |s| <= order of g[s]
//! ```
//!
//! where substrings the vocabulary does not model contribute nothing. Nulls
//! only ever form a suffix: once a decoder emits null it keeps emitting null.

mod beam;
mod exact;
mod joint;
mod linear;
mod loss;

use alloc::vec::Vec;

use thiserror::Error;

pub use beam::{beam_decode, beam_decode_hypotheses, Hypothesis};
pub use exact::{exact_decode, exact_decode_excluding, MAX_EXACT_STATES};
pub use joint::{joint_gradients, joint_train_step, JointError, JointStep};
pub use linear::{fit_linear_weights, LinearFit, LinearFitConfig, LinearWeights, Sharing};
pub use loss::{structured_loss, StructuredLoss};

use crate::lexicon::{for_each_occurrence, Gram, NGramVocab, Word, NULL_CLASS, NUM_CLASSES};
use crate::net::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("no hypothesis survived the search")]
    NoHypothesis,
    #[error("score tables do not match: {0}")]
    ShapeMismatch(&'static str),
    #[error("score tables contain a non-finite value")]
    NonFinite,
    #[error("exact decoding needs {states} states per position, more than {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("word of length {len} exceeds the table length {max}")]
    WordTooLong { len: usize, max: usize },
    #[error("no training examples")]
    NoExamples,
}

/// Unary and edge scores for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTables {
    max_len: usize,
    /// `max_len x 37`, column 36 is null.
    unary: Vec<f64>,
    /// One score per vocabulary entry.
    edge: Vec<f64>,
}

impl ScoreTables {
    pub fn new(max_len: usize, unary: Vec<f64>, edge: Vec<f64>) -> Result<Self, DecodeError> {
        if max_len == 0 || unary.len() != max_len * NUM_CLASSES {
            return Err(DecodeError::ShapeMismatch(
                "unary table must be max_len x 37",
            ));
        }
        if unary.iter().chain(&edge).any(|v| !v.is_finite()) {
            return Err(DecodeError::NonFinite);
        }
        Ok(ScoreTables {
            max_len,
            unary,
            edge,
        })
    }

    pub fn zeros(max_len: usize, vocab_size: usize) -> Self {
        ScoreTables {
            max_len,
            unary: alloc::vec![0.0; max_len * NUM_CLASSES],
            edge: alloc::vec![0.0; vocab_size],
        }
    }

    /// Raw network logits as scores.
    pub fn from_logits<T: Real>(
        char_logits: &[T],
        ngram_logits: &[T],
        max_len: usize,
    ) -> Result<Self, DecodeError> {
        Self::new(
            max_len,
            char_logits.iter().map(|v| v.as_f64()).collect(),
            ngram_logits.iter().map(|v| v.as_f64()).collect(),
        )
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn unary(&self, pos: usize, class: u8) -> f64 {
        self.unary[pos * NUM_CLASSES + class as usize]
    }

    pub fn unary_table(&self) -> &[f64] {
        &self.unary
    }

    pub fn unary_table_mut(&mut self) -> &mut [f64] {
        &mut self.unary
    }

    pub fn edge_table(&self) -> &[f64] {
        &self.edge
    }

    pub fn edge_table_mut(&mut self) -> &mut [f64] {
        &mut self.edge
    }

    /// Edge score of a gram; zero outside the vocabulary.
    pub fn edge(&self, vocab: &NGramVocab, gram: Gram) -> f64 {
        vocab.get(gram).map_or(0.0, |i| self.edge[i])
    }

    pub(crate) fn check(&self, vocab: &NGramVocab) -> Result<(), DecodeError> {
        if self.edge.len() != vocab.len() {
            return Err(DecodeError::ShapeMismatch(
                "edge table length differs from vocabulary",
            ));
        }
        Ok(())
    }
}

/// Beam widths, margin and regularization for structured training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructHyper {
    pub margin: f64,
    pub beam_train: usize,
    pub beam_test: usize,
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
}

impl Default for StructHyper {
    fn default() -> Self {
        StructHyper {
            margin: 1.0,
            beam_train: 5,
            beam_test: 10,
            lambda_alpha: 0.0,
            lambda_beta: 0.0,
        }
    }
}

/// Total score of `word`, computed term by term. `word` must fit in the
/// tables and `tables` must match `vocab`.
pub fn path_score(word: &Word, tables: &ScoreTables, vocab: &NGramVocab) -> f64 {
    debug_assert!(word.len() <= tables.max_len());
    let mut score = 0.0;
    for i in 0..tables.max_len() {
        score += tables.unary(i, word.padded_class(i));
    }
    for_each_occurrence(word.classes(), vocab.order(), |g| {
        score += tables.edge(vocab, g);
    });
    score
}

/// Sum of the edge scores of every gram that ends at the last symbol of
/// `tail`, where `tail` holds at most `order` trailing symbols of a prefix.
pub(crate) fn edge_gain(tail: &[u8], tables: &ScoreTables, vocab: &NGramVocab) -> f64 {
    let mut gain = 0.0;
    for n in 1..=tail.len() {
        if let Some(g) = Gram::new(&tail[tail.len() - n..]) {
            gain += tables.edge(vocab, g);
        }
    }
    gain
}

/// Best lexicon word under [`path_score`]; ties go to the smaller word.
pub fn lexicon_decode(
    tables: &ScoreTables,
    vocab: &NGramVocab,
    lexicon: &[Word],
) -> Result<(Word, f64), DecodeError> {
    tables.check(vocab)?;
    let mut best: Option<(&Word, f64)> = None;
    for word in lexicon {
        if word.len() > tables.max_len() {
            return Err(DecodeError::WordTooLong {
                len: word.len(),
                max: tables.max_len(),
            });
        }
        let s = path_score(word, tables, vocab);
        let better = match best {
            None => true,
            Some((bw, bs)) => s > bs || (s == bs && word < bw),
        };
        if better {
            best = Some((word, s));
        }
    }
    best.map(|(w, s)| (w.clone(), s))
        .ok_or(DecodeError::EmptyLexicon)
}

/// Per-position argmax of the unary table alone, with interior nulls dropped.
/// Returns `None` when every position prefers null.
pub fn unary_argmax_word(tables: &ScoreTables) -> Option<Word> {
    let mut classes = Vec::new();
    for i in 0..tables.max_len() {
        let row = &tables.unary[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best as u8 != NULL_CLASS {
            classes.push(best as u8);
        }
    }
    Word::from_classes(classes).ok()
}

/// Unary-only decode that always yields a word: like [`unary_argmax_word`],
/// but an all-null argmax falls back to the best symbol at position 0.
pub fn char_decode(tables: &ScoreTables) -> Word {
    unary_argmax_word(tables).unwrap_or_else(|| {
        let row = &tables.unary[..NUM_CLASSES - 1];
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        Word::from_classes(alloc::vec![best as u8]).expect("symbol class")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{encode_word, NGramVocab};
    use alloc::vec;

    fn vocab(texts: &[&str], order: usize) -> NGramVocab {
        let entries: Vec<Gram> = texts.iter().map(|t| Gram::parse(t).unwrap()).collect();
        let n = entries.len();
        NGramVocab::from_parts(order, entries, vec![1; n], vec![1.0; n]).unwrap()
    }

    fn w(s: &str) -> Word {
        encode_word(s, 23).unwrap()
    }

    #[test]
    fn zero_tables_score_zero() {
        let v = vocab(&["a", "ab"], 2);
        let t = ScoreTables::zeros(5, 2);
        assert_eq!(path_score(&w("ab"), &t, &v), 0.0);
        assert_eq!(path_score(&w("bbbbb"), &t, &v), 0.0);
    }

    #[test]
    fn hand_summed_score() {
        // N_max = 3, order 2, vocab {a, b, ab, ba}
        let v = vocab(&["a", "b", "ab", "ba"], 2);
        let mut unary = vec![0.0; 3 * 37];
        let (a, b) = (10usize, 11usize);
        unary[a] = 1.0; // pos 0 'a'
        unary[37 + b] = 2.0; // pos 1 'b'
        unary[37 + a] = -1.0; // pos 1 'a'
        unary[2 * 37 + 36] = 0.5; // pos 2 null
        unary[2 * 37 + a] = 4.0; // pos 2 'a'
        let edge = vec![0.25, -0.75, 3.0, 1.5];
        let t = ScoreTables::new(3, unary, edge).unwrap();
        // "ab": f0(a) + f1(b) + f2(null) + g(a) + g(b) + g(ab)
        assert_eq!(
            path_score(&w("ab"), &t, &v),
            1.0 + 2.0 + 0.5 + 0.25 - 0.75 + 3.0
        );
        // "aba": f0(a)+f1(b)+f2(a) + 2 g(a) + g(b) + g(ab) + g(ba)
        assert_eq!(
            path_score(&w("aba"), &t, &v),
            1.0 + 2.0 + 4.0 + 0.5 - 0.75 + 3.0 + 1.5
        );
        // "aa": g(aa) is not modelled and contributes nothing
        assert_eq!(path_score(&w("aa"), &t, &v), 1.0 - 1.0 + 0.5 + 0.5);
    }

    #[test]
    fn camel_edges_follow_the_path() {
        let all = [
            "c", "a", "m", "e", "l", "ca", "am", "me", "el", "cam", "ame", "mel", "came", "amel",
        ];
        let v = vocab(&all, 4);
        let mut edge = vec![0.0; v.len()];
        // weight each modelled gram by a distinct power of two
        for (i, e) in edge.iter_mut().enumerate() {
            *e = (1u64 << i) as f64;
        }
        let t = ScoreTables::new(23, vec![0.0; 23 * 37], edge).unwrap();
        let s = path_score(&w("camel"), &t, &v);
        assert_eq!(s, ((1u64 << all.len()) - 1) as f64);
        // a vocabulary missing some path grams drops exactly those terms
        let partial = vocab(&["c", "me", "amel", "zz"], 4);
        let t = ScoreTables::new(23, vec![0.0; 23 * 37], vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        assert_eq!(path_score(&w("camel"), &t, &partial), 7.0);
    }

    #[test]
    fn lexicon_decode_basics() {
        let v = vocab(&["a"], 1);
        let t = ScoreTables::zeros(4, 1);
        assert_eq!(lexicon_decode(&t, &v, &[w("ab")]).unwrap().0, w("ab"));
        // all scores tie at zero: lexicographically smallest wins
        let lex = [w("b"), w("ab"), w("ba")];
        assert_eq!(lexicon_decode(&t, &v, &lex).unwrap().0, w("ab"));
        assert_eq!(lexicon_decode(&t, &v, &[]), Err(DecodeError::EmptyLexicon));
        assert!(matches!(
            lexicon_decode(&t, &v, &[w("abcde")]),
            Err(DecodeError::WordTooLong { .. })
        ));
    }

    #[test]
    fn unary_argmax_drops_interior_nulls() {
        let mut unary = vec![0.0; 4 * 37];
        unary[10] = 1.0;
        unary[37 + 36] = 1.0;
        unary[2 * 37 + 11] = 1.0;
        unary[3 * 37 + 36] = 1.0;
        let t = ScoreTables::new(4, unary, vec![]).unwrap();
        assert_eq!(unary_argmax_word(&t), Some(w("ab")));
        let mut unary = vec![0.0; 2 * 37];
        unary[36] = 1.0;
        unary[37 + 36] = 1.0;
        unary[12] = 0.5;
        let t = ScoreTables::new(2, unary, vec![]).unwrap();
        assert_eq!(unary_argmax_word(&t), None);
        assert_eq!(char_decode(&t), w("c"));
    }

    #[test]
    fn tables_reject_bad_input() {
        assert!(ScoreTables::new(2, vec![0.0; 73], vec![]).is_err());
        assert_eq!(
            ScoreTables::new(1, vec![f64::NAN; 37], vec![]),
            Err(DecodeError::NonFinite)
        );
    }
}
