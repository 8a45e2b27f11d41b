use crate::error::{Error, Result};
use crate::nn::{Bound, Init, LayerNorm, Linear};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

/// `[B, L, h·d] → [B·h, L, d]`
pub(crate) fn split_heads<T: Scalar>(tape: &mut Tape<T>, x: Var, heads: usize) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (b, l, c) = (s[0], s[1], s[2]);
    let d = c / heads;
    let x = tape.reshape(x, &[b, l, heads, d])?;
    let x = tape.permute(x, &[0, 2, 1, 3])?;
    tape.reshape(x, &[b * heads, l, d])
}

/// `[B·h, L, d] → [B, L, h·d]`
pub(crate) fn merge_heads<T: Scalar>(tape: &mut Tape<T>, x: Var, batch: usize, heads: usize) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (l, d) = (s[1], s[2]);
    let x = tape.reshape(x, &[batch, heads, l, d])?;
    let x = tape.permute(x, &[0, 2, 1, 3])?;
    tape.reshape(x, &[batch, l, heads * d])
}

/// `softmax(q·kᵀ / √d)·v` per head. Inputs are `[B·h, L, d]`; returns the
/// context and the `[B·h, L_q, L_k]` attention map.
pub(crate) fn scaled_dot_attention<T: Scalar>(tape: &mut Tape<T>, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let d = *tape.shape(q).last().unwrap();
    let kt = tape.transpose_last(k)?;
    let scores = tape.bmm(q, kt)?;
    let scores = tape.scale(scores, T::one() / T::lit(d as f64).sqrt());
    let attn = tape.softmax(scores);
    let ctx = tape.bmm(attn, v)?;
    Ok((ctx, attn))
}

/// Standard multi-head self-attention with input-dependent Q, K, V and an
/// output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!("embed dim {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::xavier(&mut init.sub("q"), dim, dim),
            k: Linear::xavier_no_bias(&mut init.sub("k"), dim, dim),
            v: Linear::xavier(&mut init.sub("v"), dim, dim),
            out: Linear::xavier(&mut init.sub("out"), dim, dim),
            heads,
            dim,
        })
    }

    /// Returns the projected output `[B, L, C]` and the attention map `[B·h, L, L]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<(Var, Var)> {
        let b = tape.shape(x)[0];
        let q = self.q.forward(tape, p, x)?;
        let k = self.k.forward(tape, p, x)?;
        let v = self.v.forward(tape, p, x)?;
        let q = split_heads(tape, q, self.heads)?;
        let k = split_heads(tape, k, self.heads)?;
        let v = split_heads(tape, v, self.heads)?;
        let (ctx, attn) = scaled_dot_attention(tape, q, k, v)?;
        let ctx = merge_heads(tape, ctx, b, self.heads)?;
        Ok((self.out.forward(tape, p, ctx)?, attn))
    }
}

/// Pre-norm transformer encoder block: `x + MHSA(LN(x))`, then
/// `x + MLP(LN(x))` with a `4C` GELU hidden layer.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl EncoderBlock {
    pub const MLP_RATIO: usize = 4;

    pub fn new<T: Scalar>(init: &mut Init<'_, T>, dim: usize, heads: usize) -> Result<Self> {
        let hidden = dim * Self::MLP_RATIO;
        Ok(Self {
            norm1: LayerNorm::new(&mut init.sub("norm1"), dim),
            attn: MultiHeadAttention::new(&mut init.sub("attn"), dim, heads)?,
            norm2: LayerNorm::new(&mut init.sub("norm2"), dim),
            fc1: Linear::xavier(&mut init.sub("fc1"), dim, hidden),
            fc2: Linear::xavier(&mut init.sub("fc2"), hidden, dim),
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        Ok(self.forward_with_attention(tape, p, x)?.0)
    }

    pub fn forward_with_attention<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<(Var, Var)> {
        let h = self.norm1.forward(tape, p, x)?;
        let (a, attn) = self.attn.forward(tape, p, h)?;
        let x = tape.add(x, a)?;
        let h = self.norm2.forward(tape, p, x)?;
        let h = self.fc1.forward(tape, p, h)?;
        let h = tape.gelu(h);
        let h = self.fc2.forward(tape, p, h)?;
        Ok((tape.add(x, h)?, attn))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_preserves_shape_and_rows_sum_to_one() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let blk = EncoderBlock::new(&mut Init::new(&mut store, &mut rng), 192, 3).unwrap();
        let mut tape = Tape::no_grad();
        let p = store.bind(&mut tape);
        let x = tape.constant(Tensor::randn([2, 17, 192], 1.0, &mut rng));
        let (y, attn) = blk.forward_with_attention(&mut tape, &p, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 17, 192]);
        assert_eq!(tape.shape(attn), &[6, 17, 17]);
        for row in tape.value(attn).data().chunks(17) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn head_split_round_trips() {
        let mut tape = Tape::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = tape.constant(Tensor::randn([2, 5, 6], 1.0, &mut rng));
        let s = split_heads(&mut tape, x, 3).unwrap();
        assert_eq!(tape.shape(s), &[6, 5, 2]);
        let m = merge_heads(&mut tape, s, 2, 3).unwrap();
        assert_eq!(tape.value(m), tape.value(x));
    }
}
