//! Softmax family and last-axis normalization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn last_dim<T: Scalar>(x: &Tensor<T>) -> usize {
    *x.shape().last().expect("tensors have rank >= 1")
}

pub(crate) fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = last_dim(x);
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(n) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut z = T::zero();
        for &v in row {
            let e = (v - m).exp();
            z = z + e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e = *e / z);
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

impl<T: Scalar> Tape<T> {
    /// Softmax over the last axis, stabilized by subtracting the row maximum.
    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x));
        self.record("softmax", &[x], value, |_, y, g| {
            let n = last_dim(y);
            let mut gx = Vec::with_capacity(y.numel());
            for (yr, gr) in y.data().chunks(n).zip(g.data().chunks(n)) {
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                gx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
            }
            vec![Some(Tensor::from_parts(y.shape().to_vec(), gx))]
        })
    }

    /// `x - logsumexp(x)` over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = last_dim(xv);
        let mut out = Vec::with_capacity(xv.numel());
        for row in xv.data().chunks(n) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), out);
        self.record("log_softmax", &[x], value, |_, y, g| {
            let n = last_dim(y);
            let mut gx = Vec::with_capacity(y.numel());
            for (yr, gr) in y.data().chunks(n).zip(g.data().chunks(n)) {
                let gsum: T = gr.iter().copied().sum();
                gx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| gv - yv.exp() * gsum));
            }
            vec![Some(Tensor::from_parts(y.shape().to_vec(), gx))]
        })
    }

    /// Zero-mean, unit-variance normalization of each last-axis row, without
    /// an affine transform. Variance is the population variance.
    pub fn normalize_last(&mut self, x: Var, eps: T) -> Var {
        let xv = self.value(x);
        let n = last_dim(xv);
        let nf = T::lit(n as f64);
        let mut out = Vec::with_capacity(xv.numel());
        let mut inv_std = Vec::with_capacity(xv.numel() / n);
        for row in xv.data().chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let r = T::one() / (var + eps).sqrt();
            inv_std.push(r);
            out.extend(row.iter().map(|&v| (v - mean) * r));
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), out);
        self.record("normalize", &[x], value, move |_, y, g| {
            let mut gx = Vec::with_capacity(y.numel());
            for ((yr, gr), &r) in y.data().chunks(n).zip(g.data().chunks(n)).zip(&inv_std) {
                let gmean = gr.iter().copied().sum::<T>() / nf;
                let gy = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>() / nf;
                gx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| r * (gv - gmean - yv * gy)));
            }
            vec![Some(Tensor::from_parts(y.shape().to_vec(), gx))]
        })
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`
    /// shaped `[last_dim]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let n = last_dim(self.value(x));
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(p) != [n] {
                return Err(Error::dim(
                    "layer_norm",
                    format!("{name} has shape {:?}, expected [{n}]", self.shape(p)),
                ));
            }
        }
        let xhat = self.normalize_last(x, eps);
        let scaled = self.mul(xhat, gamma)?;
        self.add(scaled, beta)
    }
}
