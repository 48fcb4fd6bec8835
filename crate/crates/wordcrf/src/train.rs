//! Minibatch trainers for the three stages of the recipe.
//!
//! Per-sample gradients are accumulated into fixed-size chunks and the
//! chunks are summed in index order, so results do not depend on how many
//! worker threads ran.

use rayon::prelude::*;

use wordcrf_core::lexicon::{encode_bag, NGramVocab, Word};
use wordcrf_core::net::{
    backward_into, char_loss, forward_with, ngram_loss, normalize_image, sgd_step, Heads, Mode,
    NetParams, SgdHyper, SgdState,
};
use wordcrf_core::rng::{derive_seed, rng_from_seed};
use wordcrf_core::structured::{joint_gradients, StructHyper};
use wordcrf_core::synth::GrayImage;

use crate::Error;

/// Samples per gradient accumulation buffer.
const CHUNK: usize = 8;

const STREAM_SHUFFLE: u64 = 0x5348_5546;
const STREAM_DROPOUT: u64 = 0x4452_4f50;

/// A normalized image with its label and N-gram bag.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: Vec<f32>,
    pub label: Word,
    pub bag: Vec<u32>,
}

pub fn prepare_examples(images: &[GrayImage], labels: &[Word], vocab: &NGramVocab) -> Vec<Example> {
    images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, label)| Example {
            input: normalize_image(&img.pixels),
            label: label.clone(),
            bag: encode_bag(label, vocab),
        })
        .collect()
}

/// What a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    /// Per-position cross-entropy on the CHAR head.
    Char,
    /// Weighted logistic loss on the NGRAM head, plus `char_weight` times the
    /// CHAR loss so the shared trunk keeps serving both heads.
    NGram { char_weight: f32 },
    /// Structured hinge loss through both heads.
    Joint(StructHyper),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Char => "char",
            Stage::NGram { .. } => "ngram",
            Stage::Joint(_) => "joint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdHyper,
    /// Leave the convolution stages untouched.
    pub freeze_convs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            sgd: SgdHyper::default(),
            freeze_convs: false,
            seed: 1,
        }
    }
}

/// Learning rate for `epoch`: halved every quarter of the run.
pub fn learning_rate(base: f32, epoch: usize, epochs: usize) -> f32 {
    let step = (epochs / 4).max(1);
    base * 0.5f32.powi((epoch / step) as i32)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f32,
    pub mean_loss: f64,
    /// Joint examples whose competitor search came back empty.
    pub skipped: usize,
}

fn sample_gradient(
    params: &NetParams<f32>,
    ex: &Example,
    vocab: &NGramVocab,
    stage: &Stage,
    mode: Mode,
    freeze_convs: bool,
    grads: &mut NetParams<f32>,
) -> Result<(f64, bool), Error> {
    match stage {
        Stage::Char => {
            let acts = forward_with(params, &ex.input, mode, Heads::Char)?;
            let (loss, df) = char_loss(&acts.char_logits, &ex.label);
            backward_into(params, &acts, Some(&df), None, freeze_convs, grads)?;
            Ok((loss as f64, false))
        }
        Stage::NGram { char_weight } => {
            let heads = if *char_weight > 0.0 {
                Heads::Both
            } else {
                Heads::NGram
            };
            let acts = forward_with(params, &ex.input, mode, heads)?;
            let (mut loss, dg) = ngram_loss(&acts.ngram_logits, &ex.bag, vocab.weights());
            let df = if *char_weight > 0.0 {
                let (lc, mut df) = char_loss(&acts.char_logits, &ex.label);
                df.iter_mut().for_each(|v| *v *= char_weight);
                loss += char_weight * lc;
                Some(df)
            } else {
                None
            };
            backward_into(params, &acts, df.as_deref(), Some(&dg), freeze_convs, grads)?;
            Ok((loss as f64, false))
        }
        Stage::Joint(hyper) => {
            let l = joint_gradients(
                params,
                &ex.input,
                &ex.label,
                vocab,
                hyper,
                mode,
                freeze_convs,
                grads,
            )?;
            Ok((l.loss, l.skipped))
        }
    }
}

/// Trains `params` in place and returns per-epoch statistics.
///
/// `progress` is called after every epoch.
pub fn train(
    params: &mut NetParams<f32>,
    examples: &[Example],
    vocab: &NGramVocab,
    stage: Stage,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>, Error> {
    if examples.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if vocab.len() != params.config.vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary has {} entries, the NGRAM head {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    let mut state = SgdState::new(params);
    let chunks_per_batch = config.batch_size.div_ceil(CHUNK);
    let mut buffers: Vec<NetParams<f32>> =
        (0..chunks_per_batch).map(|_| params.zeros_like()).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(derive_seed(
            config.seed,
            STREAM_SHUFFLE,
            epoch as u64,
        )));
        let hyper = SgdHyper {
            lr: learning_rate(config.sgd.lr, epoch, config.epochs),
            ..config.sgd
        };
        let mut total = 0.0;
        let mut skipped = 0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let used = batch.len().div_ceil(CHUNK);
            let frozen: &NetParams<f32> = params;
            let results: Vec<Result<(f64, usize), Error>> = buffers[..used]
                .par_iter_mut()
                .zip(batch.par_chunks(CHUNK))
                .enumerate()
                .map(|(c, (buf, idx))| {
                    buf.for_each_mut(|_, s| s.fill(0.0));
                    let mut loss = 0.0;
                    let mut skip = 0;
                    for (k, &i) in idx.iter().enumerate() {
                        let pos = (b * config.batch_size + c * CHUNK + k) as u64;
                        let mode = Mode::Train {
                            dropout_seed: derive_seed(
                                config.seed,
                                STREAM_DROPOUT,
                                (epoch as u64) << 32 | pos,
                            ),
                        };
                        let (l, s) = sample_gradient(
                            frozen,
                            &examples[i],
                            vocab,
                            &stage,
                            mode,
                            config.freeze_convs,
                            buf,
                        )?;
                        loss += l;
                        skip += s as usize;
                    }
                    Ok((loss, skip))
                })
                .collect();
            for r in results {
                let (l, s) = r?;
                total += l;
                skipped += s;
            }
            let (first, rest) = buffers[..used].split_first_mut().expect("non-empty batch");
            for other in rest.iter() {
                first.add_scaled(other, 1.0);
            }
            let scale = 1.0 / batch.len() as f32;
            first.for_each_mut(|_, s| s.iter_mut().for_each(|v| *v *= scale));
            sgd_step(params, first, &hyper, &mut state, config.freeze_convs)?;
        }
        let stats = EpochStats {
            epoch,
            lr: hyper.lr,
            mean_loss: total / examples.len() as f64,
            skipped,
        };
        progress(&stats);
        history.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_each_quarter() {
        let lrs: Vec<f32> = (0..8).map(|e| learning_rate(0.1, e, 8)).collect();
        assert_eq!(
            lrs,
            vec![0.1, 0.1, 0.05, 0.05, 0.025, 0.025, 0.0125, 0.0125]
        );
        assert_eq!(learning_rate(0.1, 2, 3), 0.025);
    }
}
