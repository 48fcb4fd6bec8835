use alloc::vec;
use alloc::vec::Vec;

use super::Real;
use crate::lexicon::{Word, NUM_CLASSES};

/// Subtracts the mean and divides by the (population) standard deviation,
/// with the divisor floored at 1e-6 so constant images map to zeros.
pub fn normalize_image(pixels: &[u8]) -> Vec<f32> {
    if pixels.is_empty() {
        return Vec::new();
    }
    let n = pixels.len() as f64;
    let mean = pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
    let var = pixels
        .iter()
        .map(|&p| {
            let d = p as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = libm::sqrt(var).max(1e-6);
    pixels
        .iter()
        .map(|&p| ((p as f64 - mean) / std) as f32)
        .collect()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise log-softmax over `rows x 37` logits.
pub fn log_softmax_rows<T: Real>(logits: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(NUM_CLASSES) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

/// Row-wise softmax over `rows x 37` logits.
pub fn softmax_rows<T: Real>(logits: &[T]) -> Vec<T> {
    log_softmax_rows(logits).into_iter().map(T::exp).collect()
}

/// Mean per-position cross-entropy of the CHAR head against the null-padded
/// ground truth, and its gradient `(softmax - onehot) / max_len`.
pub fn char_loss<T: Real>(logits: &[T], gt: &Word) -> (T, Vec<T>) {
    let rows = logits.len() / NUM_CLASSES;
    let scale = T::one() / T::from_f64(rows as f64);
    let logp = log_softmax_rows(logits);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for i in 0..rows {
        let target = gt.padded_class(i) as usize;
        let row = &logp[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        loss -= row[target];
        for (c, g) in grad[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
            .iter_mut()
            .enumerate()
        {
            let onehot = if c == target { T::one() } else { T::zero() };
            *g = (row[c].exp() - onehot) * scale;
        }
    }
    (loss * scale, grad)
}

/// Weighted binary cross-entropy of the NGRAM head, averaged over the
/// vocabulary. `bag` holds the sorted indices of present N-grams.
pub fn ngram_loss<T: Real>(logits: &[T], bag: &[u32], weights: &[f64]) -> (T, Vec<T>) {
    debug_assert_eq!(logits.len(), weights.len());
    let scale = T::one() / T::from_f64(logits.len() as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    let mut present = bag.iter().peekable();
    for (s, (&z, g)) in logits.iter().zip(grad.iter_mut()).enumerate() {
        let y = if present.peek() == Some(&&(s as u32)) {
            present.next();
            T::one()
        } else {
            T::zero()
        };
        let w = T::from_f64(weights[s]);
        // log(1 + e^z) - y z, evaluated without overflow
        let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
        loss += w * (softplus - y * z);
        *g = w * (sigmoid(z) - y) * scale;
    }
    (loss * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::encode_word;

    #[test]
    fn normalize_constant_is_zero() {
        assert!(normalize_image(&[7; 100]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_two_levels() {
        let mut px = vec![0u8; 50];
        px.extend(vec![255u8; 50]);
        let out = normalize_image(&px);
        assert!(out[..50].iter().all(|&v| (v + 1.0).abs() < 1e-6));
        assert!(out[50..].iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn normalize_moments() {
        let px: Vec<u8> = (0..3200u32)
            .map(|i| ((i * 37 + i / 7) % 251) as u8)
            .collect();
        let out = normalize_image(&px);
        let n = out.len() as f64;
        let mean = out.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = out.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn char_loss_uniform() {
        let gt = encode_word("ab", 23).unwrap();
        let (loss, grad) = char_loss(&vec![0.0f64; 23 * 37], &gt);
        assert!((loss - 37f64.ln()).abs() < 1e-12);
        let row_sum: f64 = grad[..37].iter().sum();
        assert!(row_sum.abs() < 1e-12);
    }

    #[test]
    fn char_loss_confident() {
        let gt = encode_word("ab", 3).unwrap();
        let mut f = vec![0.0f64; 3 * 37];
        for i in 0..3 {
            f[i * 37 + gt.padded_class(i) as usize] = 60.0;
        }
        assert!(char_loss(&f, &gt).0 < 1e-20);
    }

    #[test]
    fn ngram_loss_at_zero() {
        let (loss, grad) = ngram_loss(&[0.0f64; 6], &[], &[1.0; 6]);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!(grad.iter().all(|&g| (g - 0.5 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn ngram_loss_confident() {
        let logits = [40.0f64, -40.0, 40.0];
        let (loss, _) = ngram_loss(&logits, &[0, 2], &[1.0, 2.0, 0.5]);
        assert!(loss < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let f: Vec<f32> = (0..74).map(|i| (i as f32 * 0.7).sin() * 30.0).collect();
        let p = softmax_rows(&f);
        for row in p.chunks(37) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
        assert!(sigmoid(80.0f32) <= 1.0 && sigmoid(-80.0f32) >= 0.0);
    }
}
