use crate::error::{dim_err, Result};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new<T: Real>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (n, c, h, w) = x.dims4()?;
        let (k, wc, kh, kw) = weight.dims4()?;
        if wc != c {
            return dim_err(format!(
                "conv2d: input has {c} channels but weight expects {wc}"
            ));
        }
        if stride == 0 {
            return dim_err("conv2d: stride must be positive");
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return dim_err(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            k,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output columns `ox` whose input column `ox * stride + kj - pad` lies in `0..w`.
fn valid_cols(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride).min(g.ow);
    let hi = if g.w + g.pad > kj {
        ((g.w + g.pad - kj - 1) / g.stride + 1).min(g.ow)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.c {
        let xc = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kj);
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize || lo == hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &xc[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let start = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (v, &s) in line[lo..hi].iter_mut().zip(src[start..].iter().step_by(g.stride)) {
                            *v = s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.c {
        let dxc = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kj);
                if lo == hi {
                    continue;
                }
                let start = lo * g.stride + kj - g.pad;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dxc[iy as usize * g.w + start..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.ow + lo..oy * g.ow + hi];
                    for (d, &v) in dst.iter_mut().step_by(g.stride).zip(line) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    g: &ConvGeom,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Tensor<T> {
    let plane = g.out_plane();
    let patch = g.patch();
    let in_size = g.c * g.h * g.w;
    let out_size = g.k * plane;
    let mut out = vec![T::zero(); g.n * out_size];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); patch * plane]
    };
    for b in 0..g.n {
        let xb = &x.data()[b * in_size..(b + 1) * in_size];
        let ob = &mut out[b * out_size..(b + 1) * out_size];
        let cols: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(g, xb, &mut col);
            &col
        };
        gemm(g.k, patch, plane, weight.data(), false, cols, false, ob, false);
        if let Some(bias) = bias {
            for (kk, &bv) in bias.data().iter().enumerate() {
                for v in &mut ob[kk * plane..(kk + 1) * plane] {
                    *v += bv;
                }
            }
        }
    }
    Tensor::from_parts(vec![g.n, g.k, g.oh, g.ow], out)
}

type ConvGrads<T> = (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>);

/// Returns `(d_input, d_weight, d_bias)`; entries are computed only when requested.
pub(crate) fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: [bool; 3],
) -> ConvGrads<T> {
    let plane = g.out_plane();
    let patch = g.patch();
    let in_size = g.c * g.h * g.w;
    let out_size = g.k * plane;
    let mut dx = need[0].then(|| vec![T::zero(); g.n * in_size]);
    let mut dw = need[1].then(|| vec![T::zero(); g.k * patch]);
    let mut col = vec![T::zero(); if g.is_pointwise() { 0 } else { patch * plane }];
    let mut dcol = vec![T::zero(); if need[0] && !g.is_pointwise() { patch * plane } else { 0 }];
    for b in 0..g.n {
        let gb = &grad_out.data()[b * out_size..(b + 1) * out_size];
        if let Some(dw) = dw.as_mut() {
            let xb = &x.data()[b * in_size..(b + 1) * in_size];
            let cols: &[T] = if g.is_pointwise() {
                xb
            } else {
                im2col(g, xb, &mut col);
                &col
            };
            gemm(g.k, plane, patch, gb, false, cols, true, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_size..(b + 1) * in_size];
            if g.is_pointwise() {
                gemm(patch, g.k, plane, weight.data(), true, gb, false, dxb, true);
            } else {
                gemm(patch, g.k, plane, weight.data(), true, gb, false, &mut dcol, false);
                col2im(g, &dcol, dxb);
            }
        }
    }
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); g.k];
        for b in 0..g.n {
            for (kk, acc) in db.iter_mut().enumerate() {
                let start = b * out_size + kk * plane;
                for &v in &grad_out.data()[start..start + plane] {
                    *acc += v;
                }
            }
        }
        Tensor::from_parts(vec![g.k], db)
    });
    (
        dx.map(|d| Tensor::from_parts(vec![g.n, g.c, g.h, g.w], d)),
        dw.map(|d| Tensor::from_parts(vec![g.k, g.c, g.kh, g.kw], d)),
        db,
    )
}
