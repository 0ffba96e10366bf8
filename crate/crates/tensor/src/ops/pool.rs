use crate::real::Real;
use crate::tensor::Tensor;

/// Number of windows along an axis; the last window is clamped at the border.
pub(crate) fn pooled_len(len: usize, kernel: usize, stride: usize) -> usize {
    if len <= kernel {
        1
    } else {
        (len - kernel).div_ceil(stride) + 1
    }
}

fn window(o: usize, kernel: usize, stride: usize, len: usize) -> (usize, usize) {
    let start = o * stride;
    (start, (start + kernel).min(len))
}

fn adaptive_window(o: usize, out: usize, len: usize) -> (usize, usize) {
    ((o * len) / out, ((o + 1) * len).div_ceil(out))
}

pub(crate) fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dims4().expect("rank checked by caller");
    let plane = h * w;
    let inv = T::of(1.0 / plane as f64);
    let data = x
        .data()
        .chunks(plane)
        .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    Tensor::from_parts(vec![n, c], data)
}

pub(crate) fn global_avg_pool_backward<T: Real>(shape: &[usize], grad: &Tensor<T>) -> Tensor<T> {
    let plane = shape[2] * shape[3];
    let inv = T::of(1.0 / plane as f64);
    let mut out = Vec::with_capacity(grad.numel() * plane);
    for &g in grad.data() {
        out.extend(std::iter::repeat_n(g * inv, plane));
    }
    Tensor::from_parts(shape.to_vec(), out)
}

/// Pooling windows for one output grid: per output cell, `(y0, y1, x0, x1)`.
pub(crate) enum Windows {
    Strided { kernel: usize, stride: usize },
    Adaptive,
}

impl Windows {
    pub fn out_dims(&self, h: usize, w: usize, target: (usize, usize)) -> (usize, usize) {
        match *self {
            Windows::Strided { kernel, stride } => {
                (pooled_len(h, kernel, stride), pooled_len(w, kernel, stride))
            }
            Windows::Adaptive => target,
        }
    }

    fn bounds(&self, o: usize, out: usize, len: usize) -> (usize, usize) {
        match *self {
            Windows::Strided { kernel, stride } => window(o, kernel, stride, len),
            Windows::Adaptive => adaptive_window(o, out, len),
        }
    }
}

pub(crate) fn avg_pool<T: Real>(x: &Tensor<T>, win: &Windows, oh: usize, ow: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4().expect("rank checked by caller");
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for p in x.data().chunks(h * w) {
        for oy in 0..oh {
            let (y0, y1) = win.bounds(oy, oh, h);
            for ox in 0..ow {
                let (x0, x1) = win.bounds(ox, ow, w);
                let mut acc = T::zero();
                for y in y0..y1 {
                    for v in &p[y * w + x0..y * w + x1] {
                        acc += *v;
                    }
                }
                out.push(acc / T::of(((y1 - y0) * (x1 - x0)) as f64));
            }
        }
    }
    Tensor::from_parts(vec![n, c, oh, ow], out)
}

pub(crate) fn avg_pool_backward<T: Real>(
    shape: &[usize],
    win: &Windows,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let (h, w) = (shape[2], shape[3]);
    let (oh, ow) = (grad.shape()[2], grad.shape()[3]);
    let mut dx = vec![T::zero(); shape.iter().product()];
    for (p, g) in dx.chunks_mut(h * w).zip(grad.data().chunks(oh * ow)) {
        for oy in 0..oh {
            let (y0, y1) = win.bounds(oy, oh, h);
            for ox in 0..ow {
                let (x0, x1) = win.bounds(ox, ow, w);
                let share = g[oy * ow + ox] / T::of(((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    for v in &mut p[y * w + x0..y * w + x1] {
                        *v += share;
                    }
                }
            }
        }
    }
    Tensor::from_parts(shape.to_vec(), dx)
}

/// Max pooling; also returns the flat input index chosen for each output.
/// Ties resolve to the first element in row-major window order.
pub(crate) fn max_pool<T: Real>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
) -> (Tensor<T>, Vec<usize>) {
    let (n, c, h, w) = x.dims4().expect("rank checked by caller");
    let oh = pooled_len(h, kernel, stride);
    let ow = pooled_len(w, kernel, stride);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for (pi, p) in x.data().chunks(h * w).enumerate() {
        for oy in 0..oh {
            let (y0, y1) = window(oy, kernel, stride, h);
            for ox in 0..ow {
                let (x0, x1) = window(ox, kernel, stride, w);
                let mut best = y0 * w + x0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        if p[y * w + xx] > p[best] {
                            best = y * w + xx;
                        }
                    }
                }
                out.push(p[best]);
                arg.push(pi * h * w + best);
            }
        }
    }
    (Tensor::from_parts(vec![n, c, oh, ow], out), arg)
}

pub(crate) fn max_pool_backward<T: Real>(
    shape: &[usize],
    argmax: &[usize],
    grad: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = vec![T::zero(); shape.iter().product()];
    for (&i, &g) in argmax.iter().zip(grad.data()) {
        dx[i] += g;
    }
    Tensor::from_parts(shape.to_vec(), dx)
}

/// Bilinear sampling taps along one axis with the half-pixel
/// (`align_corners = false`) convention: `(i0, i1, w0, w1)` per output index.
pub(crate) fn bilinear_taps(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64, f64)> {
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len_in - 1);
            let i1 = if i0 + 1 < len_in { i0 + 1 } else { i0 };
            let l1 = src - i0 as f64;
            let l1 = if i1 == i0 { 0.0 } else { l1 };
            (i0, i1, 1.0 - l1, l1)
        })
        .collect()
}

pub(crate) fn upsample_bilinear<T: Real>(x: &Tensor<T>, oh: usize, ow: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4().expect("rank checked by caller");
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for p in x.data().chunks(h * w) {
        for &(y0, y1, wy0, wy1) in &ty {
            let (wy0, wy1) = (T::of(wy0), T::of(wy1));
            for &(x0, x1, wx0, wx1) in &tx {
                let (wx0, wx1) = (T::of(wx0), T::of(wx1));
                let top = p[y0 * w + x0] * wx0 + p[y0 * w + x1] * wx1;
                let bot = p[y1 * w + x0] * wx0 + p[y1 * w + x1] * wx1;
                out.push(top * wy0 + bot * wy1);
            }
        }
    }
    Tensor::from_parts(vec![n, c, oh, ow], out)
}

pub(crate) fn upsample_bilinear_backward<T: Real>(shape: &[usize], grad: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (shape[2], shape[3]);
    let (oh, ow) = (grad.shape()[2], grad.shape()[3]);
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut dx = vec![T::zero(); shape.iter().product()];
    for (p, g) in dx.chunks_mut(h * w).zip(grad.data().chunks(oh * ow)) {
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::of(wy0), T::of(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::of(wx0), T::of(wx1));
                let gv = g[oy * ow + ox];
                p[y0 * w + x0] += gv * wy0 * wx0;
                p[y0 * w + x1] += gv * wy0 * wx1;
                p[y1 * w + x0] += gv * wy1 * wx0;
                p[y1 * w + x1] += gv * wy1 * wx1;
            }
        }
    }
    Tensor::from_parts(shape.to_vec(), dx)
}
