use alloc::vec::Vec;

use thiserror::Error;

use super::{structured_loss, DecodeError, ScoreTables, StructHyper, StructuredLoss};
use crate::lexicon::{NGramVocab, Word};
use crate::net::{
    backward_into, forward, sgd_step, Mode, NetError, NetParams, Real, SgdHyper, SgdState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JointError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Outcome of one joint update.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStep {
    pub loss: f64,
    pub skipped: bool,
    pub competitor: Option<Word>,
}

/// Runs the network on `input`, scores the CRF built from its raw logits and
/// adds the gradient of the structured hinge loss into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn joint_gradients<T: Real>(
    params: &NetParams<T>,
    input: &[T],
    gt: &Word,
    vocab: &NGramVocab,
    hyper: &StructHyper,
    mode: Mode,
    freeze_convs: bool,
    grads: &mut NetParams<T>,
) -> Result<StructuredLoss, JointError> {
    if vocab.len() != params.config.vocab_size {
        return Err(NetError::ShapeMismatch("vocabulary size differs from the NGRAM head").into());
    }
    let acts = forward(params, input, mode)?;
    let tables =
        ScoreTables::from_logits(&acts.char_logits, &acts.ngram_logits, params.config.max_len)?;
    let loss = structured_loss(&tables, vocab, gt, hyper)?;
    if loss.loss > 0.0 {
        let df: Vec<T> = loss.d_unary.iter().map(|&v| T::from_f64(v)).collect();
        let dg: Vec<T> = loss.d_edge.iter().map(|&v| T::from_f64(v)).collect();
        backward_into(params, &acts, Some(&df), Some(&dg), freeze_convs, grads)?;
    }
    Ok(loss)
}

/// One stochastic update of the whole model on a single example.
#[allow(clippy::too_many_arguments)]
pub fn joint_train_step<T: Real>(
    params: &mut NetParams<T>,
    state: &mut SgdState<T>,
    input: &[T],
    gt: &Word,
    vocab: &NGramVocab,
    hyper: &StructHyper,
    sgd: &SgdHyper,
    mode: Mode,
    freeze_convs: bool,
) -> Result<JointStep, JointError> {
    let mut grads = params.zeros_like();
    let loss = joint_gradients(
        params,
        input,
        gt,
        vocab,
        hyper,
        mode,
        freeze_convs,
        &mut grads,
    )?;
    sgd_step(params, &grads, sgd, state, freeze_convs)?;
    Ok(JointStep {
        loss: loss.loss,
        skipped: loss.skipped,
        competitor: loss.competitor,
    })
}
