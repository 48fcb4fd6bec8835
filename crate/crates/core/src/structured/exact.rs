use alloc::vec;
use alloc::vec::Vec;

use super::{edge_gain, DecodeError, ScoreTables};
use crate::lexicon::{NGramVocab, Word, NULL_CLASS, NUM_SYMBOLS};

/// Largest number of live states per position [`exact_decode`] accepts.
pub const MAX_EXACT_STATES: usize = 1 << 20;

#[derive(Clone)]
struct Best {
    score: f64,
    prefix: Vec<u8>,
}

impl Best {
    fn beats(&self, other: &Option<Best>) -> bool {
        match other {
            None => true,
            Some(o) => self.score > o.score || (self.score == o.score && self.prefix < o.prefix),
        }
    }
}

fn offer(slot: &mut Option<Best>, cand: Best) {
    if cand.beats(slot) {
        *slot = Some(cand);
    }
}

/// Exact maximizer of the path score by dynamic programming over the last
/// `order - 1` symbols. Ties go to the lexicographically smaller word.
pub fn exact_decode(tables: &ScoreTables, vocab: &NGramVocab) -> Result<(Word, f64), DecodeError> {
    exact_decode_excluding(tables, vocab, None)
}

/// [`exact_decode`] over every word except `exclude`.
pub fn exact_decode_excluding(
    tables: &ScoreTables,
    vocab: &NGramVocab,
    exclude: Option<&Word>,
) -> Result<(Word, f64), DecodeError> {
    tables.check(vocab)?;
    let keep = vocab.order() - 1;
    let full = NUM_SYMBOLS
        .checked_pow(keep as u32)
        .filter(|&n| n <= MAX_EXACT_STATES)
        .ok_or(DecodeError::StateSpaceTooLarge {
            states: NUM_SYMBOLS.saturating_pow(keep as u32),
            limit: MAX_EXACT_STATES,
        })?;
    let max_len = tables.max_len();
    let exclude = exclude.filter(|w| w.len() <= max_len).map(Word::classes);

    // live[s]: best path whose last min(i, keep) symbols encode to s in base 36
    let mut live: Vec<Option<Best>> = vec![None; 1];
    let mut ended: Option<Best> = None;
    // the single path that still spells a prefix of `exclude`
    let mut on_path: Option<f64> = None;
    match exclude {
        Some(_) => on_path = Some(0.0),
        None => {
            live[0] = Some(Best {
                score: 0.0,
                prefix: Vec::new(),
            })
        }
    }

    let mut digits = vec![0u8; keep + 1];
    for i in 0..max_len {
        let k_now = i.min(keep);
        let k_next = (i + 1).min(keep);
        let size_next = NUM_SYMBOLS.pow(k_next as u32);
        let null = tables.unary(i, NULL_CLASS);
        let mut next: Vec<Option<Best>> = vec![None; size_next];
        let mut next_ended = ended.take().map(|b| Best {
            score: b.score + null,
            prefix: b.prefix,
        });

        for (s, slot) in live.iter().enumerate() {
            let Some(b) = slot else { continue };
            let mut rest = s;
            for d in (0..k_now).rev() {
                digits[d] = (rest % NUM_SYMBOLS) as u8;
                rest /= NUM_SYMBOLS;
            }
            let tail = &mut digits[..=k_now];
            for class in 0..NUM_SYMBOLS as u8 {
                tail[k_now] = class;
                let gain = edge_gain(tail, tables, vocab);
                let score = b.score + (tables.unary(i, class) + gain);
                let to = (s * NUM_SYMBOLS + class as usize) % size_next;
                if next[to].as_ref().is_some_and(|o| o.score > score) {
                    continue;
                }
                let mut prefix = b.prefix.clone();
                prefix.push(class);
                offer(&mut next[to], Best { score, prefix });
            }
            if i > 0 {
                offer(
                    &mut next_ended,
                    Best {
                        score: b.score + null,
                        prefix: b.prefix.clone(),
                    },
                );
            }
        }

        if let (Some(score), Some(w)) = (on_path, exclude) {
            let spelled = &w[..i];
            let start = i.saturating_sub(keep);
            let mut tail: Vec<u8> = spelled[start..].to_vec();
            tail.push(0);
            let s_base = spelled[start..]
                .iter()
                .fold(0usize, |acc, &c| acc * NUM_SYMBOLS + c as usize);
            for class in 0..NUM_SYMBOLS as u8 {
                if w.get(i) == Some(&class) {
                    continue;
                }
                *tail.last_mut().unwrap() = class;
                let gain = edge_gain(&tail, tables, vocab);
                let to = (s_base * NUM_SYMBOLS + class as usize) % size_next;
                let mut prefix = spelled.to_vec();
                prefix.push(class);
                offer(
                    &mut next[to],
                    Best {
                        score: score + (tables.unary(i, class) + gain),
                        prefix,
                    },
                );
            }
            if i > 0 && i < w.len() {
                offer(
                    &mut next_ended,
                    Best {
                        score: score + null,
                        prefix: spelled.to_vec(),
                    },
                );
            }
            on_path = match w.get(i) {
                Some(&class) if i + 1 < max_len => {
                    *tail.last_mut().unwrap() = class;
                    Some(score + (tables.unary(i, class) + edge_gain(&tail, tables, vocab)))
                }
                _ => None,
            };
        }
        debug_assert!(next.len() <= full);
        live = next;
        ended = next_ended;
    }

    let mut best = ended;
    for b in live.into_iter().flatten() {
        offer(&mut best, b);
    }
    let best = best.ok_or(DecodeError::NoHypothesis)?;
    let word = Word::from_classes(best.prefix).map_err(|_| DecodeError::NoHypothesis)?;
    Ok((word, best.score))
}
