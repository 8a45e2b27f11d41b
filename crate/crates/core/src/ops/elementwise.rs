//! Broadcasting arithmetic and point-wise activations.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{strides, Tensor};

/// Shape resulting from numpy-style (right-aligned) broadcasting.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every element of `out_shape`, the flat offset of the element of an
/// input of shape `in_shape` that broadcasts onto it.
fn broadcast_offsets(out_shape: &[usize], in_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let pad = rank - in_shape.len();
    let in_strides = strides(in_shape);
    let mut eff = vec![0usize; rank];
    for i in pad..rank {
        if in_shape[i - pad] != 1 {
            eff[i] = in_strides[i - pad];
        }
    }
    let n: usize = out_shape.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += eff[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    offsets
}

fn reduce_to<T: Scalar>(grad: &[T], offsets: Option<&[usize]>, shape: &[usize]) -> Tensor<T> {
    match offsets {
        None => Tensor::from_parts(shape.to_vec(), grad.to_vec()),
        Some(offs) => {
            let mut out = Tensor::zeros(shape.to_vec());
            let data = out.data_mut();
            for (&g, &o) in grad.iter().zip(offs) {
                data[o] = data[o] + g;
            }
            out
        }
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

impl<T: Scalar> Tape<T> {
    fn binary(&mut self, op: BinOp, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| {
            Error::dim(
                op.name(),
                format!("cannot broadcast {:?} with {:?}", av.shape(), bv.shape()),
            )
        })?;
        let a_off = (av.shape() != out_shape.as_slice()).then(|| Rc::new(broadcast_offsets(&out_shape, av.shape())));
        let b_off = (bv.shape() != out_shape.as_slice()).then(|| Rc::new(broadcast_offsets(&out_shape, bv.shape())));
        let n: usize = out_shape.iter().product();
        let (ad, bd) = (av.data(), bv.data());
        let data: Vec<T> = (0..n)
            .map(|i| {
                let x = ad[a_off.as_ref().map_or(i, |o| o[i])];
                let y = bd[b_off.as_ref().map_or(i, |o| o[i])];
                op.apply(x, y)
            })
            .collect();
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.record(op.name(), &[a, b], value, move |inputs, _out, g| {
            let (x, y) = (inputs[0], inputs[1]);
            let gd = g.data();
            let at = |off: &Option<Rc<Vec<usize>>>, i: usize| off.as_ref().map_or(i, |o| o[i]);
            let (ga, gb): (Vec<T>, Vec<T>) = match op {
                BinOp::Add => (gd.to_vec(), gd.to_vec()),
                BinOp::Sub => (gd.to_vec(), gd.iter().map(|&v| -v).collect()),
                BinOp::Mul => (
                    (0..gd.len()).map(|i| gd[i] * y.data()[at(&b_off, i)]).collect(),
                    (0..gd.len()).map(|i| gd[i] * x.data()[at(&a_off, i)]).collect(),
                ),
                BinOp::Div => {
                    let ga = (0..gd.len()).map(|i| gd[i] / y.data()[at(&b_off, i)]).collect();
                    let gb = (0..gd.len())
                        .map(|i| {
                            let yv = y.data()[at(&b_off, i)];
                            -gd[i] * x.data()[at(&a_off, i)] / (yv * yv)
                        })
                        .collect();
                    (ga, gb)
                }
            };
            vec![
                Some(reduce_to(&ga, a_off.as_deref().map(|v| v.as_slice()), x.shape())),
                Some(reduce_to(&gb, b_off.as_deref().map(|v| v.as_slice()), y.shape())),
            ]
        }))
    }

    /// Broadcasting element-wise sum.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Div, a, b)
    }

    /// `x * c` for a constant `c`.
    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.record("scale", &[x], value, move |_, _, g| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.record("add_scalar", &[x], value, |_, _, g| vec![Some(g.clone())])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.record("square", &[x], value, |inputs, _, g| {
            vec![Some(g.zip_map(inputs[0], |gv, xv| gv * xv * T::lit(2.0)))]
        })
    }

    /// GELU with the tanh approximation:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu_scalar);
        self.record("gelu", &[x], value, |inputs, _, g| {
            vec![Some(g.zip_map(inputs[0], |gv, xv| gv * gelu_grad_scalar(xv)))]
        })
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let k = T::lit(GELU_K);
    let c = T::lit(GELU_C);
    let half = T::lit(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

pub fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let k = T::lit(GELU_K);
    let c = T::lit(GELU_C);
    let half = T::lit(0.5);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::lit(3.0) * c * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[4]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[4]), None);
    }

    #[test]
    fn bias_add_and_reduced_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64([2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap());
        let b = tape.param(Tensor::from_f64([3], &[10., 20., 30.]).unwrap());
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[11., 22., 33., 14., 25., 36.]);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(b).unwrap().data(), &[2., 2., 2.]);
    }

    #[test]
    fn mismatched_broadcast_is_dimension_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros([2, 3]));
        let y = tape.param(Tensor::zeros([2]));
        assert!(matches!(tape.mul(x, y), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gelu_fixed_points_and_asymptotes() {
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        assert!((gelu_scalar(10.0f64) - 10.0).abs() < 1e-9);
        assert!(gelu_scalar(-10.0f64).abs() < 1e-9);
    }

    #[test]
    fn channel_broadcast_offsets() {
        // [1,2,1,1] bias onto [1,2,2,2]
        let offs = broadcast_offsets(&[1, 2, 2, 2], &[1, 2, 1, 1]);
        assert_eq!(offs, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }
}
