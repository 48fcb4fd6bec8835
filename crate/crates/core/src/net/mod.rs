//! A small convolutional network with a shared trunk and two linear heads.
//!
//! Topology: `[conv -> ReLU -> 2x2 max-pool] * n -> dense -> ReLU -> dropout`
//! feeding a CHAR head (`max_len` independent 37-way classifiers, stored as
//! one block matrix) and an NGRAM head (one logistic detector per modelled
//! N-gram). All layers are generic over [`Real`] so the same code runs in
//! `f32` for training and in `f64` for gradient checks.

mod kernels;
mod loss;
mod model;
mod params;
mod sgd;

use alloc::vec::Vec;

use thiserror::Error;

pub use loss::{char_loss, log_softmax_rows, ngram_loss, normalize_image, sigmoid, softmax_rows};
pub use model::{backward, backward_into, forward, forward_with, Activations, Heads, Mode};
pub use params::{Conv, Dense, NetParams, TensorKind, TensorView};
pub use sgd::{sgd_step, SgdHyper, SgdState};

use crate::lexicon::{DEFAULT_MAX_LEN, NUM_CLASSES};

/// Floating point type the network can run in.
pub trait Real:
    num_traits::Float
    + core::iter::Sum
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::fmt::Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("activations do not match this network or were computed without a needed head")]
    StaleActivations,
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
}

/// One convolution stage: `filters` square `kernel`x`kernel` filters with
/// stride 1 and same-size zero padding, then ReLU and 2x2 max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub convs: Vec<ConvSpec>,
    pub fc_width: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    /// Drop probability on the trunk's dense output during training.
    pub dropout: f32,
}

impl NetConfig {
    /// The default desk-scale topology for a 32x100 input.
    pub fn desk(vocab_size: usize) -> Self {
        NetConfig {
            input_h: 32,
            input_w: 100,
            convs: alloc::vec![
                ConvSpec {
                    filters: 8,
                    kernel: 5
                },
                ConvSpec {
                    filters: 16,
                    kernel: 3
                },
            ],
            fc_width: 256,
            max_len: DEFAULT_MAX_LEN,
            vocab_size,
            dropout: 0.5,
        }
    }

    /// Channel count, height and width entering each conv stage, followed by
    /// the shape of the final pooled feature map.
    pub fn feature_shapes(&self) -> Result<Vec<(usize, usize, usize)>, NetError> {
        let (mut c, mut h, mut w) = (1, self.input_h, self.input_w);
        let mut shapes = alloc::vec![(c, h, w)];
        for spec in &self.convs {
            if spec.filters == 0 {
                return Err(NetError::BadConfig("conv layer with no filters"));
            }
            if spec.kernel == 0 || spec.kernel % 2 == 0 {
                return Err(NetError::BadConfig("kernel size must be odd"));
            }
            if h < 2 || w < 2 {
                return Err(NetError::BadConfig("feature map too small to pool"));
            }
            c = spec.filters;
            h /= 2;
            w /= 2;
            shapes.push((c, h, w));
        }
        Ok(shapes)
    }

    pub fn feature_len(&self) -> Result<usize, NetError> {
        let shapes = self.feature_shapes()?;
        let &(c, h, w) = shapes.last().expect("input shape present");
        Ok(c * h * w)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_h == 0 || self.input_w == 0 {
            return Err(NetError::BadConfig("empty input"));
        }
        if self.fc_width == 0 || self.max_len == 0 || self.vocab_size == 0 {
            return Err(NetError::BadConfig("zero-sized layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::BadConfig("dropout must lie in [0, 1)"));
        }
        self.feature_shapes().map(|_| ())
    }

    pub fn char_outputs(&self) -> usize {
        self.max_len * NUM_CLASSES
    }

    pub fn input_len(&self) -> usize {
        self.input_h * self.input_w
    }
}
