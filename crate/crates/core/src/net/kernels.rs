//! Dense loops for convolution, pooling and matrix-vector products.
//!
//! Inner loops run over contiguous rows so they vectorize; reductions use a
//! fixed set of eight partial sums, which keeps results bit-reproducible.

use super::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(x.len(), y.len());
    for (o, &i) in y.iter_mut().zip(x) {
        *o += alpha * i;
    }
}

#[inline]
pub fn sum<T: Real>(x: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let c = x.chunks_exact(8);
    let r = c.remainder();
    for v in c {
        for k in 0..8 {
            acc[k] += v[k];
        }
    }
    let mut tail = T::zero();
    for &v in r {
        tail += v;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Valid output range for a kernel tap at offset `d` on an axis of length `n`.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// Same-padded stride-1 convolution. `input` is `[cin][h][w]`, `out` is
/// `[cout][h][w]` and is overwritten.
#[allow(clippy::too_many_arguments)]
pub fn conv_forward<T: Real>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    k: usize,
    out: &mut [T],
) {
    let hw = h * w;
    let pad = (k / 2) as isize;
    for (oc, out_c) in out.chunks_exact_mut(hw).enumerate() {
        out_c.fill(bias[oc]);
        for ic in 0..cin {
            let in_c = &input[ic * hw..(ic + 1) * hw];
            let taps = &weight[(oc * cin + ic) * k * k..(oc * cin + ic + 1) * k * k];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y_lo, y_hi) = tap_range(dy, h);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x_lo, x_hi) = tap_range(dx, w);
                    let wv = taps[ky * k + kx];
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let sx = (x_lo as isize + dx) as usize;
                        let n = x_hi - x_lo;
                        axpy(
                            &mut out_c[y * w + x_lo..y * w + x_hi],
                            wv,
                            &in_c[sy * w + sx..sy * w + sx + n],
                        );
                    }
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients of [`conv_forward`] and, when
/// `d_input` is given, adds the input gradient into it.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    k: usize,
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) {
    let hw = h * w;
    let pad = (k / 2) as isize;
    for (oc, g_c) in d_out.chunks_exact(hw).enumerate() {
        d_bias[oc] += sum(g_c);
        for ic in 0..cin {
            let in_c = &input[ic * hw..(ic + 1) * hw];
            let base = (oc * cin + ic) * k * k;
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y_lo, y_hi) = tap_range(dy, h);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x_lo, x_hi) = tap_range(dx, w);
                    let n = x_hi - x_lo;
                    let sx = (x_lo as isize + dx) as usize;
                    let wv = weight[base + ky * k + kx];
                    let mut acc = T::zero();
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let g_row = &g_c[y * w + x_lo..y * w + x_hi];
                        acc += dot(g_row, &in_c[sy * w + sx..sy * w + sx + n]);
                        if let Some(d_in) = d_input.as_deref_mut() {
                            let d_c = &mut d_in[ic * hw..(ic + 1) * hw];
                            axpy(&mut d_c[sy * w + sx..sy * w + sx + n], wv, g_row);
                        }
                    }
                    d_weight[base + ky * k + kx] += acc;
                }
            }
        }
    }
}

/// In-place ReLU.
pub fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose forward output was clamped by ReLU.
pub fn relu_backward<T: Real>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 stride-2 max-pooling over `[c][h][w]`, dropping a trailing odd row or
/// column. Records the flat input index of each maximum (first on ties).
pub fn maxpool_forward<T: Real>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    argmax: &mut [u32],
) {
    let (h2, w2) = (h / 2, w / 2);
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let i0 = ch * h * w + 2 * y * w + 2 * x;
                let candidates = [i0, i0 + 1, i0 + w, i0 + w + 1];
                let mut best = candidates[0];
                for &i in &candidates[1..] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                let o = ch * h2 * w2 + y * w2 + x;
                out[o] = input[best];
                argmax[o] = best as u32;
            }
        }
    }
}

pub fn maxpool_backward<T: Real>(d_out: &[T], argmax: &[u32], d_input: &mut [T]) {
    for (&g, &i) in d_out.iter().zip(argmax) {
        d_input[i as usize] += g;
    }
}
