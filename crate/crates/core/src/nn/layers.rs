use crate::error::{Error, Result};
use crate::nn::params::{Bound, Init, ParamId};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

pub const LN_EPS: f64 = 1e-5;

/// Affine map over the last axis: `x·W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights drawn from `N(0, std²)`, zero bias.
    pub fn normal<T: Scalar>(init: &mut Init<'_, T>, in_dim: usize, out_dim: usize, std: f64) -> Self {
        let weight = init.normal("w", &[in_dim, out_dim], std);
        let bias = Some(init.zeros("b", &[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn xavier<T: Scalar>(init: &mut Init<'_, T>, in_dim: usize, out_dim: usize) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = init.uniform("w", &[in_dim, out_dim], bound);
        let bias = Some(init.zeros("b", &[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Glorot-uniform weights and no bias.
    pub fn xavier_no_bias<T: Scalar>(init: &mut Init<'_, T>, in_dim: usize, out_dim: usize) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            weight: init.uniform("w", &[in_dim, out_dim], bound),
            bias: None,
            in_dim,
            out_dim,
        }
    }

    pub fn zeros<T: Scalar>(init: &mut Init<'_, T>, in_dim: usize, out_dim: usize) -> Self {
        let weight = init.zeros("w", &[in_dim, out_dim]);
        let bias = Some(init.zeros("b", &[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.last() != Some(&self.in_dim) {
            return Err(Error::dim(
                "linear",
                format!("input {shape:?} does not end in {}", self.in_dim),
            ));
        }
        let rows = shape.iter().product::<usize>() / self.in_dim;
        let flat = tape.reshape(x, &[rows, self.in_dim])?;
        let mut y = tape.matmul(flat, p[self.weight])?;
        if let Some(b) = self.bias {
            y = tape.add(y, p[b])?;
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        tape.reshape(y, &out_shape)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, dim: usize) -> Self {
        Self {
            gamma: init.ones("gamma", &[dim]),
            beta: init.zeros("beta", &[dim]),
            dim,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gamma], p[self.beta], T::lit(LN_EPS))
    }
}
