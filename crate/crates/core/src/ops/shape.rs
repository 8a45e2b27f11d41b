//! Layout operations: reshape, axis permutation, concatenation, slicing and
//! whole-tensor reductions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{strides, Tensor};

fn permute_data<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let rank = shape.len();
    let n = x.numel();
    let src = x.data();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        data.push(src[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(out_shape, data)
}

impl<T: Scalar> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape.to_vec())?;
        let in_shape = self.shape(x).to_vec();
        Ok(self.record("reshape", &[x], value, move |_, _, g| {
            vec![Some(Tensor::from_parts(in_shape.clone(), g.data().to_vec()))]
        }))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let rank = self.shape(x).len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::dim(
                "permute",
                format!("{axes:?} is not a permutation of the axes of {:?}", self.shape(x)),
            ));
        }
        let value = permute_data(self.value(x), axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self.record("permute", &[x], value, move |_, _, g| {
            vec![Some(permute_data(g, &inverse))]
        }))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        if rank < 2 {
            return Err(Error::dim("transpose", format!("rank {rank} < 2")));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(x, &axes)
    }

    /// Concatenates tensors that agree on every axis except `axis`.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::dim("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut sizes = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim(
                    "concat",
                    format!("{s:?} does not match {base:?} off axis {axis}"),
                ));
            }
            sizes.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total: usize = sizes.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &sz) in xs.iter().zip(&sizes) {
                let d = self.value(x).data();
                data.extend_from_slice(&d[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.record("concat", xs, value, move |inputs, _, g| {
            let gd = g.data();
            let mut grads: Vec<Vec<T>> = sizes.iter().map(|&s| Vec::with_capacity(outer * s * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gi, &sz) in grads.iter_mut().zip(&sizes) {
                    gi.extend_from_slice(&gd[off..off + sz * inner]);
                    off += sz * inner;
                }
            }
            grads
                .into_iter()
                .zip(inputs)
                .map(|(gi, x)| Some(Tensor::from_parts(x.shape().to_vec(), gi)))
                .collect()
        }))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.record("narrow", &[x], value, move |_, _, g| {
            let mut gx = Tensor::zeros(shape.clone());
            let gd = g.data();
            let dst = gx.data_mut();
            for o in 0..outer {
                let base = (o * full + start) * inner;
                dst[base..base + len * inner].copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Sum of all elements, as a shape-`[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.record("sum", &[x], value, |inputs, _, g| {
            vec![Some(Tensor::full(inputs[0].shape().to_vec(), g.data()[0]))]
        })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::lit(self.value(x).numel() as f64);
        let s = self.sum(x);
        self.scale(s, T::one() / n)
    }
}
