use super::{NetError, NetParams, Real, TensorKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

impl Default for SgdHyper {
    fn default() -> Self {
        SgdHyper {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    velocity: NetParams<T>,
}

impl<T: Real> SgdState<T> {
    pub fn new(params: &NetParams<T>) -> Self {
        SgdState {
            velocity: params.zeros_like(),
        }
    }
}

/// `v <- momentum * v + (grad + weight_decay * p); p <- p - lr * v`.
///
/// Convolution tensors are left untouched (velocity included) when
/// `freeze_convs` is set.
pub fn sgd_step<T: Real>(
    params: &mut NetParams<T>,
    grads: &NetParams<T>,
    hyper: &SgdHyper,
    state: &mut SgdState<T>,
    freeze_convs: bool,
) -> Result<(), NetError> {
    if params.config != grads.config || params.config != state.velocity.config {
        return Err(NetError::ShapeMismatch(
            "gradient and parameter configs differ",
        ));
    }
    let lr = T::from_f64(hyper.lr as f64);
    let mu = T::from_f64(hyper.momentum as f64);
    let wd = T::from_f64(hyper.weight_decay as f64);
    let g_views = grads.tensors();
    let tensors = params
        .slices_mut()
        .into_iter()
        .zip(state.velocity.slices_mut());
    for (((kind, p), (_, v)), g) in tensors.zip(g_views) {
        if freeze_convs && kind == TensorKind::Conv {
            continue;
        }
        for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g.data) {
            *v = mu * *v + (g + wd * *p);
            *p -= lr * *v;
        }
    }
    Ok(())
}
