use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::kernels::{
    axpy, conv_backward, conv_forward, dot, maxpool_backward, maxpool_forward, relu, relu_backward,
};
use super::{Dense, NetError, NetParams, Real};
use crate::rng::rng_from_seed;

/// Forward pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active with a mask drawn from `dropout_seed`.
    Train {
        dropout_seed: u64,
    },
    Eval,
}

/// Which heads a forward pass evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heads {
    Both,
    Char,
    NGram,
}

impl Heads {
    fn char(self) -> bool {
        matches!(self, Heads::Both | Heads::Char)
    }
    fn ngram(self) -> bool {
        matches!(self, Heads::Both | Heads::NGram)
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    input: Vec<T>,
    /// Post-ReLU, pre-pool output of each conv stage.
    conv_out: Vec<Vec<T>>,
    pooled: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
    /// Post-ReLU trunk output before dropout.
    trunk_out: Vec<T>,
    /// Per-unit dropout scale (0 or `1/(1-p)`); `None` when no dropout ran.
    dropout: Option<Vec<T>>,
    hidden: Vec<T>,
    /// CHAR head logits, `max_len x 37` row-major; empty if not evaluated.
    pub char_logits: Vec<T>,
    /// NGRAM head logits, one per vocabulary entry; empty if not evaluated.
    pub ngram_logits: Vec<T>,
}

impl<T: Real> Activations<T> {
    /// Trunk output fed to the heads (after dropout).
    pub fn features(&self) -> &[T] {
        &self.hidden
    }
}

fn dense_forward<T: Real>(layer: &Dense<T>, x: &[T]) -> Vec<T> {
    (0..layer.outputs)
        .map(|o| layer.bias[o] + dot(layer.row(o), x))
        .collect()
}

/// Adds this layer's weight/bias gradients for output gradient `dy`, and the
/// input gradient into `dx` when given. Zero output gradients are skipped.
fn dense_backward<T: Real>(
    layer: &Dense<T>,
    x: &[T],
    dy: &[T],
    grad: &mut Dense<T>,
    mut dx: Option<&mut [T]>,
) {
    let n = layer.inputs;
    for (o, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        grad.bias[o] += g;
        axpy(&mut grad.weight[o * n..(o + 1) * n], g, x);
        if let Some(d) = dx.as_deref_mut() {
            axpy(d, g, layer.row(o));
        }
    }
}

/// Evaluates both heads. See [`forward_with`].
pub fn forward<T: Real>(
    params: &NetParams<T>,
    input: &[T],
    mode: Mode,
) -> Result<Activations<T>, NetError> {
    forward_with(params, input, mode, Heads::Both)
}

/// Runs the network on one normalized `input_h x input_w` image.
pub fn forward_with<T: Real>(
    params: &NetParams<T>,
    input: &[T],
    mode: Mode,
    heads: Heads,
) -> Result<Activations<T>, NetError> {
    let config = &params.config;
    if input.len() != config.input_len() {
        return Err(NetError::ShapeMismatch("input length"));
    }
    let shapes = config.feature_shapes()?;
    let mut conv_out = Vec::with_capacity(params.convs.len());
    let mut pooled: Vec<Vec<T>> = Vec::with_capacity(params.convs.len());
    let mut argmax = Vec::with_capacity(params.convs.len());
    for (i, layer) in params.convs.iter().enumerate() {
        let (cin, h, w) = shapes[i];
        let x = if i == 0 { input } else { &pooled[i - 1] };
        let mut y = vec![T::zero(); layer.out_ch * h * w];
        conv_forward(
            x,
            cin,
            h,
            w,
            &layer.weight,
            &layer.bias,
            layer.kernel,
            &mut y,
        );
        relu(&mut y);
        let (_, h2, w2) = shapes[i + 1];
        let mut p = vec![T::zero(); layer.out_ch * h2 * w2];
        let mut idx = vec![0u32; p.len()];
        maxpool_forward(&y, layer.out_ch, h, w, &mut p, &mut idx);
        conv_out.push(y);
        pooled.push(p);
        argmax.push(idx);
    }
    let features = pooled.last().map(Vec::as_slice).unwrap_or(input);
    let mut trunk_out = dense_forward(&params.trunk, features);
    relu(&mut trunk_out);

    let dropout = match mode {
        Mode::Train { dropout_seed } if config.dropout > 0.0 => {
            let mut rng = rng_from_seed(dropout_seed);
            let keep = 1.0 - config.dropout as f64;
            let scale = T::from_f64(1.0 / keep);
            Some(
                (0..trunk_out.len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect::<Vec<T>>(),
            )
        }
        _ => None,
    };
    let hidden: Vec<T> = match &dropout {
        Some(mask) => trunk_out.iter().zip(mask).map(|(&a, &m)| a * m).collect(),
        None => trunk_out.clone(),
    };
    let char_logits = if heads.char() {
        dense_forward(&params.char_head, &hidden)
    } else {
        Vec::new()
    };
    let ngram_logits = if heads.ngram() {
        dense_forward(&params.ngram_head, &hidden)
    } else {
        Vec::new()
    };
    Ok(Activations {
        input: input.to_vec(),
        conv_out,
        pooled,
        argmax,
        trunk_out,
        dropout,
        hidden,
        char_logits,
        ngram_logits,
    })
}

/// Fresh gradients for the given head gradients. See [`backward_into`].
pub fn backward<T: Real>(
    params: &NetParams<T>,
    acts: &Activations<T>,
    d_char: Option<&[T]>,
    d_ngram: Option<&[T]>,
    freeze_convs: bool,
) -> Result<NetParams<T>, NetError> {
    let mut grads = params.zeros_like();
    backward_into(params, acts, d_char, d_ngram, freeze_convs, &mut grads)?;
    Ok(grads)
}

/// Reverse-mode pass that adds parameter gradients into `grads`.
///
/// A `None` head gradient is treated as zero. With `freeze_convs` the
/// convolution stages receive no gradient (the dense trunk and heads still
/// do).
pub fn backward_into<T: Real>(
    params: &NetParams<T>,
    acts: &Activations<T>,
    d_char: Option<&[T]>,
    d_ngram: Option<&[T]>,
    freeze_convs: bool,
    grads: &mut NetParams<T>,
) -> Result<(), NetError> {
    let config = &params.config;
    let fc = config.fc_width;
    let consistent = acts.hidden.len() == fc
        && acts.trunk_out.len() == fc
        && acts.input.len() == config.input_len()
        && acts.pooled.len() == params.convs.len()
        && grads.config == *config;
    if !consistent {
        return Err(NetError::StaleActivations);
    }
    let mut d_hidden = vec![T::zero(); fc];
    if let Some(df) = d_char {
        if df.len() != config.char_outputs() || acts.char_logits.len() != df.len() {
            return Err(NetError::StaleActivations);
        }
        dense_backward(
            &params.char_head,
            &acts.hidden,
            df,
            &mut grads.char_head,
            Some(&mut d_hidden),
        );
    }
    if let Some(dg) = d_ngram {
        if dg.len() != config.vocab_size || acts.ngram_logits.len() != dg.len() {
            return Err(NetError::StaleActivations);
        }
        dense_backward(
            &params.ngram_head,
            &acts.hidden,
            dg,
            &mut grads.ngram_head,
            Some(&mut d_hidden),
        );
    }
    if let Some(mask) = &acts.dropout {
        for (d, &m) in d_hidden.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    relu_backward(&acts.trunk_out, &mut d_hidden);

    let features = acts.pooled.last().map(Vec::as_slice).unwrap_or(&acts.input);
    let propagate = !freeze_convs && !params.convs.is_empty();
    let mut d_features = if propagate {
        Some(vec![T::zero(); features.len()])
    } else {
        None
    };
    dense_backward(
        &params.trunk,
        features,
        &d_hidden,
        &mut grads.trunk,
        d_features.as_deref_mut(),
    );
    let Some(mut d_pooled) = d_features else {
        return Ok(());
    };

    let shapes = config.feature_shapes()?;
    for i in (0..params.convs.len()).rev() {
        let layer = &params.convs[i];
        let (cin, h, w) = shapes[i];
        let mut d_conv = vec![T::zero(); acts.conv_out[i].len()];
        maxpool_backward(&d_pooled, &acts.argmax[i], &mut d_conv);
        relu_backward(&acts.conv_out[i], &mut d_conv);
        let x = if i == 0 {
            &acts.input
        } else {
            &acts.pooled[i - 1]
        };
        let mut d_x = (i > 0).then(|| vec![T::zero(); x.len()]);
        let g = &mut grads.convs[i];
        conv_backward(
            x,
            cin,
            h,
            w,
            &layer.weight,
            layer.kernel,
            &d_conv,
            &mut g.weight,
            &mut g.bias,
            d_x.as_deref_mut(),
        );
        match d_x {
            Some(d) => d_pooled = d,
            None => break,
        }
    }
    Ok(())
}
