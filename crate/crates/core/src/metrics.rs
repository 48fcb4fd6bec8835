//! Word accuracy and the max-F-score of N-gram detection.

use alloc::vec::Vec;

use thiserror::Error;

use crate::lexicon::Word;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{predictions} predictions for {truths} ground truth words")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("no samples to score")]
    Empty,
    #[error("sample {0} has mismatched score and label lengths")]
    DimensionMismatch(usize),
    #[error("ground truth contains no positive labels")]
    DegenerateGroundTruth,
}

/// Fraction of exact word matches.
pub fn accuracy(predictions: &[Word], truth: &[Word]) -> Result<f64, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truths: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Best F-score over all decision thresholds, pooled over every
/// (sample, N-gram) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub f: f64,
    /// Scores `>= threshold` are predicted present.
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Sweeps the threshold over every observed score. Ties in F resolve to the
/// lowest threshold.
pub fn max_fscore(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<FScore, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: scores.len(),
            truths: labels.len(),
        });
    }
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for (i, (s, l)) in scores.iter().zip(labels).enumerate() {
        if s.len() != l.len() {
            return Err(MetricsError::DimensionMismatch(i));
        }
        pairs.extend(s.iter().copied().zip(l.iter().copied()));
    }
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 {
        return Err(MetricsError::DegenerateGroundTruth);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best: Option<FScore> = None;
    let (mut tp, mut predicted) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let threshold = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == threshold {
            predicted += 1;
            tp += pairs[i].1 as usize;
            i += 1;
        }
        let f = 2.0 * tp as f64 / (predicted + positives) as f64;
        // thresholds arrive in decreasing order, so `>=` keeps the lowest one
        if best.is_none_or(|b| f >= b.f) {
            best = Some(FScore {
                f,
                threshold,
                precision: tp as f64 / predicted as f64,
                recall: tp as f64 / positives as f64,
            });
        }
    }
    Ok(best.expect("at least one pair"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::encode_word;
    use alloc::vec;

    fn words(texts: &[&str]) -> Vec<Word> {
        texts.iter().map(|t| encode_word(t, 23).unwrap()).collect()
    }

    #[test]
    fn accuracy_examples() {
        let a = words(&["ab", "cd", "ef", "gh"]);
        assert_eq!(accuracy(&a, &a), Ok(1.0));
        assert_eq!(accuracy(&a, &words(&["x", "y", "z", "w"])), Ok(0.0));
        assert_eq!(accuracy(&a, &words(&["ab", "cd", "ef", "zz"])), Ok(0.75));
        assert!(matches!(
            accuracy(&a, &a[..2]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(accuracy(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn perfect_detector() {
        let labels = vec![vec![true, false, true], vec![false, false, true]];
        let scores: Vec<Vec<f64>> = labels
            .iter()
            .map(|l| l.iter().map(|&b| b as u8 as f64).collect())
            .collect();
        let f = max_fscore(&scores, &labels).unwrap();
        assert_eq!(f.f, 1.0);
        assert_eq!(f.threshold, 1.0);
    }

    #[test]
    fn constant_scores() {
        // p = 3 positives among n = 8 pairs: F = 2p / (n + p)
        let labels = vec![
            vec![true, false, false, true],
            vec![false, true, false, false],
        ];
        let scores = vec![vec![0.5; 4], vec![0.5; 4]];
        let f = max_fscore(&scores, &labels).unwrap();
        assert!((f.f - 6.0 / 11.0).abs() < 1e-12);
        assert_eq!(f.threshold, 0.5);
    }

    #[test]
    fn degenerate_truth() {
        let r = max_fscore(&[vec![0.1, 0.9]], &[vec![false, false]]);
        assert_eq!(r, Err(MetricsError::DegenerateGroundTruth));
        let r = max_fscore(&[vec![0.1]], &[vec![false, true]]);
        assert_eq!(r, Err(MetricsError::DimensionMismatch(0)));
    }
}
