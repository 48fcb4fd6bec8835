use alloc::vec;
use alloc::vec::Vec;

use super::{beam_decode, path_score, DecodeError, ScoreTables, StructHyper};
use crate::lexicon::{for_each_occurrence, NGramVocab, Word, NUM_CLASSES};

/// Margin-rescaled hinge loss and its subgradient for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredLoss {
    pub loss: f64,
    /// Subgradient with respect to the unary table, `max_len x 37`.
    pub d_unary: Vec<f64>,
    /// Subgradient with respect to the edge table.
    pub d_edge: Vec<f64>,
    /// Highest-scoring incorrect word the beam found.
    pub competitor: Option<Word>,
    pub gt_score: f64,
    /// True when no incorrect word survived the search even after widening.
    pub skipped: bool,
}

fn add_path(word: &Word, vocab: &NGramVocab, sign: f64, d_unary: &mut [f64], d_edge: &mut [f64]) {
    for (i, row) in d_unary.chunks_exact_mut(NUM_CLASSES).enumerate() {
        row[word.padded_class(i) as usize] += sign;
    }
    for_each_occurrence(word.classes(), vocab.order(), |g| {
        if let Some(s) = vocab.get(g) {
            d_edge[s] += sign;
        }
    });
}

/// `max(0, margin + S(w*) - S(gt))` where `w*` is the best beam path other
/// than `gt`.
///
/// The search runs at `hyper.beam_train`; if it ends empty it is repeated
/// once at twice the width, and a second failure marks the example skipped
/// with zero loss.
pub fn structured_loss(
    tables: &ScoreTables,
    vocab: &NGramVocab,
    gt: &Word,
    hyper: &StructHyper,
) -> Result<StructuredLoss, DecodeError> {
    tables.check(vocab)?;
    let max_len = tables.max_len();
    if gt.len() > max_len {
        return Err(DecodeError::WordTooLong {
            len: gt.len(),
            max: max_len,
        });
    }
    let gt_score = path_score(gt, tables, vocab);
    let mut out = StructuredLoss {
        loss: 0.0,
        d_unary: vec![0.0; max_len * NUM_CLASSES],
        d_edge: vec![0.0; vocab.len()],
        competitor: None,
        gt_score,
        skipped: false,
    };
    let found = match beam_decode(tables, vocab, hyper.beam_train, Some(gt)) {
        Err(DecodeError::NoHypothesis) => {
            beam_decode(tables, vocab, hyper.beam_train.saturating_mul(2), Some(gt))
        }
        r => r,
    };
    let rival = match found {
        Ok((w, _)) => w,
        Err(DecodeError::NoHypothesis) => {
            out.skipped = true;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let z = hyper.margin + path_score(&rival, tables, vocab) - gt_score;
    if z > 0.0 {
        out.loss = z;
        add_path(&rival, vocab, 1.0, &mut out.d_unary, &mut out.d_edge);
        add_path(gt, vocab, -1.0, &mut out.d_unary, &mut out.d_edge);
    }
    out.competitor = Some(rival);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{encode_word, Gram};

    fn vocab() -> NGramVocab {
        let entries: Vec<Gram> = ["a", "b", "ab"]
            .iter()
            .map(|t| Gram::parse(t).unwrap())
            .collect();
        NGramVocab::from_parts(2, entries, vec![1; 3], vec![1.0; 3]).unwrap()
    }

    #[test]
    fn confident_truth_has_no_loss() {
        let mut unary = vec![0.0; 3 * 37];
        unary[10] = 10.0;
        unary[37 + 11] = 10.0;
        unary[2 * 37 + 36] = 10.0;
        let t = ScoreTables::new(3, unary, vec![0.0; 3]).unwrap();
        let gt = encode_word("ab", 3).unwrap();
        let l = structured_loss(&t, &vocab(), &gt, &StructHyper::default()).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.d_unary.iter().chain(&l.d_edge).all(|&v| v == 0.0));
        assert!(!l.skipped);
    }

    #[test]
    fn flat_tables_cost_the_margin() {
        let t = ScoreTables::zeros(3, 3);
        let gt = encode_word("ab", 3).unwrap();
        let l = structured_loss(&t, &vocab(), &gt, &StructHyper::default()).unwrap();
        assert_eq!(l.loss, 1.0);
        let rival = l.competitor.unwrap();
        assert_ne!(rival, gt);
        // rows of the unary subgradient each sum to zero
        for row in l.d_unary.chunks(37) {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
        }
        // the rival "0" shares no modelled gram with "ab"
        assert_eq!(l.d_edge, vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn single_word_space_is_skipped() {
        // with max_len 1 and width 1 the beam can always find another symbol,
        // so force emptiness through a zero width
        let t = ScoreTables::zeros(1, 3);
        let gt = encode_word("a", 1).unwrap();
        let hyper = StructHyper {
            beam_train: 0,
            ..StructHyper::default()
        };
        let l = structured_loss(&t, &vocab(), &gt, &hyper).unwrap();
        assert!(l.skipped);
        assert_eq!(l.loss, 0.0);
    }
}
