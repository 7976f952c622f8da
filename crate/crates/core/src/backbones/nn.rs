//! Shared dense/conv primitives for the toy backbones. Plain loops over
//! `ndarray` views; shapes are small enough that clarity wins.

use ndarray::{Array1, Array3, Array4};

/// 2-D convolution with zero padding. `kernels` is `(out_ch, in_ch, kh, kw)`.
pub fn conv2d(
    input: &Array3<f64>,
    kernels: &Array4<f64>,
    bias: &Array1<f64>,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let (in_ch, h, w) = input.dim();
    let (out_ch, kc, kh, kw) = kernels.dim();
    debug_assert_eq!(in_ch, kc);
    debug_assert_eq!(bias.len(), out_ch);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = Array3::zeros((out_ch, oh, ow));
    for o in 0..out_ch {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o];
                for c in 0..in_ch {
                    for di in 0..kh {
                        for dj in 0..kw {
                            let y = (i * stride + di) as isize - pad as isize;
                            let x = (j * stride + dj) as isize - pad as isize;
                            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                acc += kernels[(o, c, di, dj)] * input[(c, y as usize, x as usize)];
                            }
                        }
                    }
                }
                out[(o, i, j)] = acc;
            }
        }
    }
    out
}

/// Gradient of `conv2d` with respect to its input, contracted with the
/// output adjoint (same loop structure as the forward pass, scattered).
pub fn conv2d_input_vjp(
    input_dim: (usize, usize, usize),
    kernels: &Array4<f64>,
    stride: usize,
    pad: usize,
    out_grad: &Array3<f64>,
) -> Array3<f64> {
    let (in_ch, h, w) = input_dim;
    let (out_ch, _, kh, kw) = kernels.dim();
    let (_, oh, ow) = out_grad.dim();
    let mut grad = Array3::zeros((in_ch, h, w));
    for o in 0..out_ch {
        for i in 0..oh {
            for j in 0..ow {
                let g = out_grad[(o, i, j)];
                if g == 0.0 {
                    continue;
                }
                for c in 0..in_ch {
                    for di in 0..kh {
                        for dj in 0..kw {
                            let y = (i * stride + di) as isize - pad as isize;
                            let x = (j * stride + dj) as isize - pad as isize;
                            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                grad[(c, y as usize, x as usize)] += kernels[(o, c, di, dj)] * g;
                            }
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x(input: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = input.dim();
    let mut out = Array3::zeros((c, 2 * h, 2 * w));
    for ch in 0..c {
        for i in 0..2 * h {
            for j in 0..2 * w {
                out[(ch, i, j)] = input[(ch, i / 2, j / 2)];
            }
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
