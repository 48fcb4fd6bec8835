use alloc::vec::Vec;
use core::cmp::Ordering;

use alloc::collections::BinaryHeap;
use hashbrown::HashMap;

use super::{edge_gain, DecodeError, ScoreTables};
use crate::lexicon::{Gram, NGramVocab, Word, NULL_CLASS, NUM_SYMBOLS};

/// A partial path kept on the beam.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Symbols emitted so far, nulls excluded.
    pub prefix: Vec<u8>,
    pub score: f64,
    /// Whether the path has emitted its first null.
    pub terminated: bool,
    /// Whether `prefix` is still a prefix of the excluded word.
    on_excluded: bool,
}

impl Hypothesis {
    fn root(on_excluded: bool) -> Self {
        Hypothesis {
            prefix: Vec::new(),
            score: 0.0,
            terminated: false,
            on_excluded,
        }
    }

    pub fn word(&self) -> Option<Word> {
        Word::from_classes(self.prefix.clone()).ok()
    }
}

/// Merge key: the last `order - 1` symbols, the terminated flag and the
/// exclusion flag. Terminated paths all share one key since their futures
/// are identical.
type Key = (u64, bool, bool);

/// A one-step extension of a beam entry, ordered by score and then by
/// reverse prefix, so the greatest candidate is the preferred one.
#[derive(PartialEq)]
struct Candidate {
    score: f64,
    prefix: Vec<u8>,
    key: Key,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.prefix.cmp(&self.prefix))
    }
}

impl Candidate {
    fn into_hypothesis(self) -> Hypothesis {
        Hypothesis {
            prefix: self.prefix,
            score: self.score,
            terminated: self.key.1,
            on_excluded: self.key.2,
        }
    }
}

fn suffix_key(tail: &[u8], keep: usize) -> u64 {
    let from = tail.len().saturating_sub(keep);
    Gram::new(&tail[from..]).map_or(0, Gram::raw)
}

/// Everything a step needs to extend one hypothesis.
struct Step<'a> {
    tables: &'a ScoreTables,
    vocab: &'a NGramVocab,
    exclude: Option<&'a Word>,
    keep: usize,
    pos: usize,
}

impl Step<'_> {
    fn extend(&self, h: &Hypothesis, tail: &mut Vec<u8>, out: &mut Vec<Candidate>) {
        let i = self.pos;
        let max_len = self.tables.max_len();
        let excl_next = self
            .exclude
            .filter(|_| h.on_excluded)
            .map(|w| w.classes().get(i).copied());
        tail.clear();
        tail.extend_from_slice(&h.prefix[h.prefix.len().saturating_sub(self.keep)..]);
        tail.push(0);
        for class in 0..NUM_SYMBOLS as u8 {
            *tail.last_mut().unwrap() = class;
            let on = excl_next == Some(Some(class));
            if on && i + 1 == max_len && self.exclude.is_some_and(|w| w.len() == max_len) {
                continue;
            }
            let gain = edge_gain(tail, self.tables, self.vocab);
            let mut prefix = Vec::with_capacity(h.prefix.len() + 1);
            prefix.extend_from_slice(&h.prefix);
            prefix.push(class);
            out.push(Candidate {
                score: h.score + (self.tables.unary(i, class) + gain),
                prefix,
                key: (suffix_key(tail, self.keep), false, on),
            });
        }
        // the empty word is not a word, and the excluded word may not end here
        if i > 0 && excl_next != Some(None) {
            // a finished word only collects nulls, so score it to the end now
            let mut score = h.score;
            for j in i..max_len {
                score += self.tables.unary(j, NULL_CLASS);
            }
            out.push(Candidate {
                score,
                prefix: h.prefix.clone(),
                key: (0, true, false),
            });
        }
    }
}

/// Number of distinct merge keys a step can produce, saturating.
fn key_bound(keep: usize) -> usize {
    u32::try_from(keep)
        .ok()
        .and_then(|k| NUM_SYMBOLS.checked_pow(k))
        .and_then(|n| n.checked_mul(2))
        .map_or(usize::MAX, |n| n + 1)
}

/// Best word under the path score found by a left-to-right beam search,
/// with its score. `exclude`, when given, is never returned.
pub fn beam_decode(
    tables: &ScoreTables,
    vocab: &NGramVocab,
    width: usize,
    exclude: Option<&Word>,
) -> Result<(Word, f64), DecodeError> {
    let beam = beam_decode_hypotheses(tables, vocab, width, exclude)?;
    let best = &beam[0];
    let word = best.word().ok_or(DecodeError::NoHypothesis)?;
    Ok((word, best.score))
}

/// The final beam plus the best finished word, best first.
///
/// Finished words leave the beam as soon as they emit their null and only
/// the best is kept. A beam at least as wide as the number of merge keys
/// never drops a key and so returns the exact optimum. Narrower beams are
/// nested: the entry of rank `w` is the best remaining extension of ranks
/// `1..=w`, so a wider beam always contains the narrower one and its best
/// score never falls as the width grows.
pub fn beam_decode_hypotheses(
    tables: &ScoreTables,
    vocab: &NGramVocab,
    width: usize,
    exclude: Option<&Word>,
) -> Result<Vec<Hypothesis>, DecodeError> {
    tables.check(vocab)?;
    if width == 0 {
        return Err(DecodeError::NoHypothesis);
    }
    let max_len = tables.max_len();
    let exclude = exclude.filter(|w| w.len() <= max_len);
    let keep = vocab.order() - 1;
    let full = width >= key_bound(keep);
    let mut beam = alloc::vec![Hypothesis::root(exclude.is_some())];
    let mut ext: Vec<Candidate> = Vec::new();
    let mut tail: Vec<u8> = Vec::with_capacity(keep + 1);
    let mut finished: Option<Candidate> = None;

    for pos in 0..max_len {
        let step = Step {
            tables,
            vocab,
            exclude,
            keep,
            pos,
        };
        beam = if full {
            merged_step(&step, &beam, &mut tail, &mut ext, &mut finished)
        } else {
            nested_step(&step, &beam, width, &mut tail, &mut ext, &mut finished)
        };
        if beam.is_empty() {
            break;
        }
    }
    beam.extend(finished.map(Candidate::into_hypothesis));
    if beam.is_empty() {
        return Err(DecodeError::NoHypothesis);
    }
    beam.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.prefix.cmp(&b.prefix))
    });
    Ok(beam)
}

/// Moves finished words out of `ext` into `finished`, keeping the best.
fn settle(ext: &mut Vec<Candidate>, finished: &mut Option<Candidate>) {
    ext.retain_mut(|c| {
        if !c.key.1 {
            return true;
        }
        if finished.as_ref().is_none_or(|f| *c > *f) {
            *finished = Some(Candidate {
                score: c.score,
                prefix: core::mem::take(&mut c.prefix),
                key: c.key,
            });
        }
        false
    });
}

/// Keeps the best candidate per merge key, with no truncation.
fn merged_step(
    step: &Step,
    beam: &[Hypothesis],
    tail: &mut Vec<u8>,
    ext: &mut Vec<Candidate>,
    finished: &mut Option<Candidate>,
) -> Vec<Hypothesis> {
    let mut best: HashMap<Key, Candidate> = HashMap::new();
    for h in beam {
        ext.clear();
        step.extend(h, tail, ext);
        settle(ext, finished);
        for c in ext.drain(..) {
            match best.get_mut(&c.key) {
                Some(old) if *old >= c => {}
                Some(old) => *old = c,
                None => {
                    best.insert(c.key, c);
                }
            }
        }
    }
    let mut next: Vec<Candidate> = best.into_values().collect();
    next.sort_by(|a, b| b.cmp(a));
    next.into_iter().map(Candidate::into_hypothesis).collect()
}

/// Rank `w` of the new beam is the best candidate not yet taken among the
/// extensions of the first `w` entries of the old beam. Paths sharing a key
/// are not merged here: which of them arrives first depends on the width,
/// and keeping the first would break the nesting.
fn nested_step(
    step: &Step,
    beam: &[Hypothesis],
    width: usize,
    tail: &mut Vec<u8>,
    ext: &mut Vec<Candidate>,
    finished: &mut Option<Candidate>,
) -> Vec<Hypothesis> {
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
    let mut next = Vec::with_capacity(width);
    for w in 0..width {
        if let Some(h) = beam.get(w) {
            ext.clear();
            step.extend(h, tail, ext);
            settle(ext, finished);
            heap.extend(ext.drain(..));
        }
        match heap.pop() {
            Some(c) => next.push(c.into_hypothesis()),
            // stopping here keeps every narrower beam a prefix of this one
            None => break,
        }
    }
    next
}
