use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{NetConfig, NetError, Real};
use crate::lexicon::NUM_CLASSES;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `[out_ch][in_ch][kernel][kernel]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs][inputs]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn row(&self, o: usize) -> &[T] {
        &self.weight[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Which part of the network a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Conv,
    Trunk,
    CharHead,
    NGramHead,
}

/// A named, shaped view of one parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorView<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
    pub data: &'a [T],
}

/// All weights of the network. Gradients and momentum buffers use the same
/// type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub config: NetConfig,
    pub convs: Vec<Conv<T>>,
    pub trunk: Dense<T>,
    /// `max_len * 37` outputs; rows `[i*37, (i+1)*37)` form position `i`.
    pub char_head: Dense<T>,
    pub ngram_head: Dense<T>,
}

impl<T: Real> NetParams<T> {
    pub fn zeros(config: &NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let shapes = config.feature_shapes()?;
        let convs = config
            .convs
            .iter()
            .zip(&shapes)
            .map(|(spec, &(in_ch, _, _))| Conv {
                in_ch,
                out_ch: spec.filters,
                kernel: spec.kernel,
                weight: vec![T::zero(); spec.filters * in_ch * spec.kernel * spec.kernel],
                bias: vec![T::zero(); spec.filters],
            })
            .collect();
        Ok(NetParams {
            config: config.clone(),
            convs,
            trunk: Dense::zeros(config.feature_len()?, config.fc_width),
            char_head: Dense::zeros(config.fc_width, config.char_outputs()),
            ngram_head: Dense::zeros(config.fc_width, config.vocab_size),
        })
    }

    /// Uniform Glorot initialization with zero biases.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self, NetError> {
        let mut p = Self::zeros(config)?;
        let mut rng = rng_from_seed(seed);
        let mut fill = |data: &mut [T], fan_in: usize, fan_out: usize| {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for v in data {
                let u: f64 = rng.random();
                *v = T::from_f64((2.0 * u - 1.0) * limit);
            }
        };
        for c in &mut p.convs {
            let k2 = c.kernel * c.kernel;
            fill(&mut c.weight, c.in_ch * k2, c.out_ch * k2);
        }
        let (fi, fo) = (p.trunk.inputs, p.trunk.outputs);
        fill(&mut p.trunk.weight, fi, fo);
        fill(&mut p.char_head.weight, config.fc_width, NUM_CLASSES);
        fill(&mut p.ngram_head.weight, config.fc_width, config.vocab_size);
        Ok(p)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, data| data.fill(T::zero()));
        z
    }

    /// Tensors in their canonical (persistence) order.
    pub fn tensors(&self) -> Vec<TensorView<'_, T>> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push(TensorView {
                name: format!("conv{i}.weight"),
                shape: vec![c.out_ch, c.in_ch, c.kernel, c.kernel],
                kind: TensorKind::Conv,
                data: &c.weight,
            });
            out.push(TensorView {
                name: format!("conv{i}.bias"),
                shape: vec![c.out_ch],
                kind: TensorKind::Conv,
                data: &c.bias,
            });
        }
        let max_len = self.config.max_len;
        let dense = [
            ("trunk", TensorKind::Trunk, &self.trunk, None),
            ("char", TensorKind::CharHead, &self.char_head, Some(max_len)),
            ("ngram", TensorKind::NGramHead, &self.ngram_head, None),
        ];
        for (name, kind, d, blocks) in dense {
            let (wshape, bshape) = match blocks {
                Some(n) => (vec![n, NUM_CLASSES, d.inputs], vec![n, NUM_CLASSES]),
                None => (vec![d.outputs, d.inputs], vec![d.outputs]),
            };
            out.push(TensorView {
                name: format!("{name}.weight"),
                shape: wshape,
                kind,
                data: &d.weight,
            });
            out.push(TensorView {
                name: format!("{name}.bias"),
                shape: bshape,
                kind,
                data: &d.bias,
            });
        }
        out
    }

    /// Visits every tensor mutably in canonical order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(TensorKind, &mut [T])) {
        for c in &mut self.convs {
            f(TensorKind::Conv, &mut c.weight);
            f(TensorKind::Conv, &mut c.bias);
        }
        f(TensorKind::Trunk, &mut self.trunk.weight);
        f(TensorKind::Trunk, &mut self.trunk.bias);
        f(TensorKind::CharHead, &mut self.char_head.weight);
        f(TensorKind::CharHead, &mut self.char_head.bias);
        f(TensorKind::NGramHead, &mut self.ngram_head.weight);
        f(TensorKind::NGramHead, &mut self.ngram_head.bias);
    }

    /// Mutable slices in canonical order.
    pub fn slices_mut(&mut self) -> Vec<(TensorKind, &mut [T])> {
        let mut out: Vec<(TensorKind, &mut [T])> = Vec::new();
        for c in &mut self.convs {
            out.push((TensorKind::Conv, &mut c.weight));
            out.push((TensorKind::Conv, &mut c.bias));
        }
        out.push((TensorKind::Trunk, &mut self.trunk.weight));
        out.push((TensorKind::Trunk, &mut self.trunk.bias));
        out.push((TensorKind::CharHead, &mut self.char_head.weight));
        out.push((TensorKind::CharHead, &mut self.char_head.bias));
        out.push((TensorKind::NGramHead, &mut self.ngram_head.weight));
        out.push((TensorKind::NGramHead, &mut self.ngram_head.bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let src = other.tensors();
        for ((_, dst), s) in self.slices_mut().into_iter().zip(src) {
            for (d, &v) in dst.iter_mut().zip(s.data) {
                *d += v * scale;
            }
        }
    }

    /// Converts every value to another float type.
    pub fn cast<U: Real>(&self) -> NetParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect();
        let dense = |d: &Dense<T>| Dense {
            inputs: d.inputs,
            outputs: d.outputs,
            weight: conv(&d.weight),
            bias: conv(&d.bias),
        };
        NetParams {
            config: self.config.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| Conv {
                    in_ch: c.in_ch,
                    out_ch: c.out_ch,
                    kernel: c.kernel,
                    weight: conv(&c.weight),
                    bias: conv(&c.bias),
                })
                .collect(),
            trunk: dense(&self.trunk),
            char_head: dense(&self.char_head),
            ngram_head: dense(&self.ngram_head),
        }
    }
}
