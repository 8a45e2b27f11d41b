//! CLS-token cross-fusion between the two branches.
//!
//! For the receiving ("own") branch with embed dim `C_o` and the sending
//! ("other") branch with embed dim `C_x`:
//!
//! ```text
//! c  = f(cls_own)                        f: C_o → C_x
//! z  = [c ‖ patches_other]               (1 + L_x tokens)
//! y  = softmax(c·W_x · (z·W_y)ᵀ / √(C_x/h)) · z·W_z     per head
//! cls_own' = g(c + y) + cls_own          g: C_x → C_o
//! ```
//!
//! Only the CLS token queries, so the attention map per head is
//! `1 × (1 + L_x)` and its cost is linear in `L_x`. The own branch's patch
//! tokens pass through unchanged.

use crate::error::Result;
use crate::fusion::attention::{merge_heads, scaled_dot_attention, split_heads};
use crate::fusion::branch::BranchState;
use crate::nn::{Bound, Init, Linear};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct CrossFusion {
    pub f_proj: Linear,
    pub g_proj: Linear,
    pub w_query: Linear,
    pub w_key: Linear,
    pub w_value: Linear,
    pub heads: usize,
    pub own_dim: usize,
    pub other_dim: usize,
}

pub struct CrossOutput {
    pub state: BranchState,
    /// Attention map `[B·h, 1, 1 + L_other]`.
    pub attention: Var,
    /// Fused token sequence `z`, `[B, 1 + L_other, C_other]`.
    pub fused_sequence: Var,
}

impl CrossFusion {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, own_dim: usize, other_dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !other_dim.is_multiple_of(heads) {
            return Err(crate::Error::Config(format!(
                "cross-attention dim {other_dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            f_proj: Linear::xavier(&mut init.sub("f"), own_dim, other_dim),
            g_proj: Linear::xavier(&mut init.sub("g"), other_dim, own_dim),
            w_query: Linear::xavier(&mut init.sub("wx"), other_dim, other_dim),
            w_key: Linear::xavier_no_bias(&mut init.sub("wy"), other_dim, other_dim),
            w_value: Linear::xavier(&mut init.sub("wz"), other_dim, other_dim),
            heads,
            own_dim,
            other_dim,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        own: &BranchState,
        other: &BranchState,
    ) -> Result<CrossOutput> {
        let b = tape.shape(own.tokens)[0];
        let cls = own.cls(tape)?;
        let projected = self.f_proj.forward(tape, p, cls)?;
        let other_patches = other.patches(tape)?;
        let z = tape.concat(&[projected, other_patches], 1)?;

        let q = self.w_query.forward(tape, p, projected)?;
        let k = self.w_key.forward(tape, p, z)?;
        let v = self.w_value.forward(tape, p, z)?;
        let q = split_heads(tape, q, self.heads)?;
        let k = split_heads(tape, k, self.heads)?;
        let v = split_heads(tape, v, self.heads)?;
        let (ctx, attention) = scaled_dot_attention(tape, q, k, v)?;
        let y = merge_heads(tape, ctx, b, self.heads)?;

        let sum = tape.add(projected, y)?;
        let back = self.g_proj.forward(tape, p, sum)?;
        let fused_cls = tape.add(back, cls)?;
        let own_patches = own.patches(tape)?;
        let tokens = tape.concat(&[fused_cls, own_patches], 1)?;
        Ok(CrossOutput {
            state: own.with_tokens(tokens),
            attention,
            fused_sequence: z,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(tape: &mut Tape<f64>, b: usize, l: usize, c: usize, rng: &mut ChaCha8Rng) -> BranchState {
        let tokens = tape.constant(Tensor::randn([b, l + 1, c], 1.0, rng));
        BranchState {
            tokens,
            num_patches: l,
            embed_dim: c,
        }
    }

    #[test]
    fn shapes_and_patch_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::<f64>::new();
        let cf = CrossFusion::new(&mut Init::new(&mut store, &mut rng), 8, 12, 3).unwrap();
        let mut tape = Tape::no_grad();
        let p = store.bind(&mut tape);
        let own = state(&mut tape, 2, 16, 8, &mut rng);
        let other = state(&mut tape, 2, 9, 12, &mut rng);
        let out = cf.forward(&mut tape, &p, &own, &other).unwrap();
        assert_eq!(tape.shape(out.attention), &[6, 1, 10]);
        assert_eq!(tape.shape(out.fused_sequence), &[2, 10, 12]);
        assert_eq!(tape.shape(out.state.tokens), &[2, 17, 8]);
        let before = own.patches(&mut tape).unwrap();
        let after = out.state.patches(&mut tape).unwrap();
        assert_eq!(tape.value(before), tape.value(after));
    }
}
