//! 2-D convolution (cross-correlation convention), its transpose, max pooling
//! and bilinear resizing, all over `[batch, channels, height, width]` tensors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Geometry of a forward convolution mapping `[b, ci, h, w]` to `[b, co, oh, ow]`
/// with a `[co, ci, kh, kw]` kernel.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    b: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    /// Output positions `o` along an axis for which `o*stride + k - pad` lands
    /// inside `[0, len)`.
    #[inline]
    fn valid(&self, k: usize, len: usize, out: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.pad { 0 } else { (self.pad - k).div_ceil(s) };
        let hi = if len + self.pad > k {
            ((len - 1 + self.pad - k) / s + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn x_len(&self) -> usize {
        self.b * self.ci * self.h * self.w
    }

    fn y_len(&self) -> usize {
        self.b * self.co * self.oh * self.ow
    }

    fn k_len(&self) -> usize {
        self.co * self.ci * self.kh * self.kw
    }
}

/// Applies `f(x_index, y_index, k_index)` for every multiply-accumulate of the
/// convolution. Forward, input-gradient and kernel-gradient passes are the
/// same loop nest with a different accumulation target.
#[inline(always)]
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    let s = g.stride;
    for b in 0..g.b {
        for co in 0..g.co {
            for ci in 0..g.ci {
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.valid(ky, g.h, g.oh);
                    for kx in 0..g.kw {
                        let (ox0, ox1) = g.valid(kx, g.w, g.ow);
                        let ki = ((co * g.ci + ci) * g.kh + ky) * g.kw + kx;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - g.pad;
                            let xrow = ((b * g.ci + ci) * g.h + iy) * g.w;
                            let yrow = ((b * g.co + co) * g.oh + oy) * g.ow;
                            for ox in ox0..ox1 {
                                f(xrow + ox * s + kx - g.pad, yrow + ox, ki);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_fwd<T: Scalar>(x: &[T], k: &[T], g: &ConvGeom) -> Vec<T> {
    let mut y = vec![T::zero(); g.y_len()];
    for_each_tap(g, |xi, yi, ki| y[yi] = y[yi] + x[xi] * k[ki]);
    y
}

fn conv_bwd_input<T: Scalar>(dy: &[T], k: &[T], g: &ConvGeom) -> Vec<T> {
    let mut dx = vec![T::zero(); g.x_len()];
    for_each_tap(g, |xi, yi, ki| dx[xi] = dx[xi] + dy[yi] * k[ki]);
    dx
}

fn conv_bwd_kernel<T: Scalar>(x: &[T], dy: &[T], g: &ConvGeom) -> Vec<T> {
    let mut dk = vec![T::zero(); g.k_len()];
    for_each_tap(g, |xi, yi, ki| dk[ki] = dk[ki] + x[xi] * dy[yi]);
    dk
}

fn expect_rank4(op: &'static str, what: &str, s: &[usize]) -> Result<()> {
    if s.len() != 4 {
        return Err(Error::dim(op, format!("{what} must be rank 4, got {s:?}")));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    /// `[B, C_in, H, W] ⋆ [C_out, C_in, kh, kw] → [B, C_out, H', W']` with
    /// `H' = ⌊(H + 2·padding − kh)/stride⌋ + 1`. No kernel flip.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ks) = (self.shape(x), self.shape(kernel));
        expect_rank4("conv2d", "input", xs)?;
        expect_rank4("conv2d", "kernel", ks)?;
        if stride == 0 {
            return Err(Error::dim("conv2d", "stride must be >= 1"));
        }
        if xs[1] != ks[1] {
            return Err(Error::dim(
                "conv2d",
                format!("input {xs:?} has {} channels, kernel {ks:?} expects {}", xs[1], ks[1]),
            ));
        }
        let (h, w) = (xs[2] + 2 * padding, xs[3] + 2 * padding);
        if ks[2] > h || ks[3] > w {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {ks:?} larger than padded input {h}x{w} (input {xs:?}, padding {padding})"),
            ));
        }
        let g = ConvGeom {
            b: xs[0],
            ci: xs[1],
            h: xs[2],
            w: xs[3],
            co: ks[0],
            kh: ks[2],
            kw: ks[3],
            oh: (h - ks[2]) / stride + 1,
            ow: (w - ks[3]) / stride + 1,
            stride,
            pad: padding,
        };
        let y = conv_fwd(self.value(x).data(), self.value(kernel).data(), &g);
        let value = Tensor::from_parts(vec![g.b, g.co, g.oh, g.ow], y);
        let out = self.record("conv2d", &[x, kernel], value, move |inputs, _, dy| {
            let dx = conv_bwd_input(dy.data(), inputs[1].data(), &g);
            let dk = conv_bwd_kernel(inputs[0].data(), dy.data(), &g);
            vec![
                Some(Tensor::from_parts(inputs[0].shape().to_vec(), dx)),
                Some(Tensor::from_parts(inputs[1].shape().to_vec(), dk)),
            ]
        });
        self.add_channel_bias(out, bias)
    }

    /// Transposed convolution, the adjoint of [`Tape::conv2d`] with respect to
    /// its input: `[B, C_in, H, W]` with a `[C_in, C_out, kh, kw]` kernel gives
    /// `[B, C_out, (H−1)·stride − 2·padding + kh, …]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xs, ks) = (self.shape(x), self.shape(kernel));
        expect_rank4("conv_transpose2d", "input", xs)?;
        expect_rank4("conv_transpose2d", "kernel", ks)?;
        if stride == 0 {
            return Err(Error::dim("conv_transpose2d", "stride must be >= 1"));
        }
        if xs[1] != ks[0] {
            return Err(Error::dim(
                "conv_transpose2d",
                format!("input {xs:?} has {} channels, kernel {ks:?} expects {}", xs[1], ks[0]),
            ));
        }
        let out_len = |n: usize, k: usize| -> Result<usize> {
            let v = (n as i64 - 1) * stride as i64 - 2 * padding as i64 + k as i64;
            if v <= 0 {
                return Err(Error::dim(
                    "conv_transpose2d",
                    format!(
                        "computed output size {v} from input {xs:?}, kernel {ks:?}, stride {stride}, padding {padding}"
                    ),
                ));
            }
            Ok(v as usize)
        };
        let (oh, ow) = (out_len(xs[2], ks[2])?, out_len(xs[3], ks[3])?);
        // the forward conv this is the adjoint of: y-shaped input -> x-shaped output
        let g = ConvGeom {
            b: xs[0],
            ci: ks[1],
            h: oh,
            w: ow,
            co: ks[0],
            kh: ks[2],
            kw: ks[3],
            oh: xs[2],
            ow: xs[3],
            stride,
            pad: padding,
        };
        let y = conv_bwd_input(self.value(x).data(), self.value(kernel).data(), &g);
        let value = Tensor::from_parts(vec![g.b, g.ci, oh, ow], y);
        let out = self.record("conv_transpose2d", &[x, kernel], value, move |inputs, _, dy| {
            let dx = conv_fwd(dy.data(), inputs[1].data(), &g);
            let dk = conv_bwd_kernel(dy.data(), inputs[0].data(), &g);
            vec![
                Some(Tensor::from_parts(inputs[0].shape().to_vec(), dx)),
                Some(Tensor::from_parts(inputs[1].shape().to_vec(), dk)),
            ]
        });
        self.add_channel_bias(out, bias)
    }

    fn add_channel_bias(&mut self, x: Var, bias: Option<Var>) -> Result<Var> {
        let Some(bias) = bias else { return Ok(x) };
        let c = self.shape(x)[1];
        if self.shape(bias) != [c] {
            return Err(Error::dim(
                "conv bias",
                format!("bias {:?} for {c} channels", self.shape(bias)),
            ));
        }
        let b = self.reshape(bias, &[c, 1, 1])?;
        self.add(x, b)
    }

    /// Max pooling over `window × window` regions. The gradient flows to the
    /// first maximal element in row-major scan order.
    pub fn max_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        expect_rank4("max_pool2d", "input", &xs)?;
        if window == 0 || stride == 0 || window > xs[2] || window > xs[3] {
            return Err(Error::dim(
                "max_pool2d",
                format!("window {window} (stride {stride}) does not fit input {xs:?}"),
            ));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut arg = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = p * h * w + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let i = p * h * w + (oy * stride + dy) * w + ox * stride + dx;
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(src[best]);
                    arg.push(best);
                }
            }
        }
        let value = Tensor::from_parts(vec![xs[0], xs[1], oh, ow], out);
        Ok(self.record("max_pool2d", &[x], value, move |inputs, _, g| {
            let mut gx = Tensor::zeros(inputs[0].shape().to_vec());
            let d = gx.data_mut();
            for (&i, &gv) in arg.iter().zip(g.data()) {
                d[i] = d[i] + gv;
            }
            vec![Some(gx)]
        }))
    }

    /// Bilinear resize of the two spatial axes using half-pixel centers
    /// (`align_corners = false`). Identity when the size already matches.
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        expect_rank4("resize_bilinear", "input", &xs)?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::dim("resize_bilinear", "zero output size"));
        }
        if xs[2] == out_h && xs[3] == out_w {
            return Ok(x);
        }
        let ys = axis_taps(xs[2], out_h);
        let xt = axis_taps(xs[3], out_w);
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(planes * out_h * out_w);
        for p in 0..planes {
            let base = p * h * w;
            for &(y0, y1, wy) in &ys {
                for &(x0, x1, wx) in &xt {
                    let (wy, wx) = (T::lit(wy), T::lit(wx));
                    let one = T::one();
                    let v = (one - wy) * ((one - wx) * src[base + y0 * w + x0] + wx * src[base + y0 * w + x1])
                        + wy * ((one - wx) * src[base + y1 * w + x0] + wx * src[base + y1 * w + x1]);
                    out.push(v);
                }
            }
        }
        let value = Tensor::from_parts(vec![xs[0], xs[1], out_h, out_w], out);
        Ok(self.record("resize_bilinear", &[x], value, move |inputs, _, g| {
            let mut gx = Tensor::zeros(inputs[0].shape().to_vec());
            let d = gx.data_mut();
            let gd = g.data();
            let mut k = 0;
            for p in 0..planes {
                let base = p * h * w;
                for &(y0, y1, wy) in &ys {
                    for &(x0, x1, wx) in &xt {
                        let (wy, wx) = (T::lit(wy), T::lit(wx));
                        let one = T::one();
                        let gv = gd[k];
                        k += 1;
                        d[base + y0 * w + x0] = d[base + y0 * w + x0] + gv * (one - wy) * (one - wx);
                        d[base + y0 * w + x1] = d[base + y0 * w + x1] + gv * (one - wy) * wx;
                        d[base + y1 * w + x0] = d[base + y1 * w + x0] + gv * wy * (one - wx);
                        d[base + y1 * w + x1] = d[base + y1 * w + x1] + gv * wy * wx;
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

/// Source taps `(i0, i1, frac)` for each output index of a resized axis.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
