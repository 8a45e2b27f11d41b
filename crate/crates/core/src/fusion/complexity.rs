//! Multiply counts of attention-map generation.
//!
//! Building the attention map costs one `d`-dimensional dot product per
//! (query, key) pair and head, plus one multiply per score for the `1/√d`
//! scaling. With `h·d = C` that is `queries · keys · (C + h)`.

/// Cross-attention with the CLS token as the only query against
/// `1 + l_other` keys (projected CLS plus the other branch's patches).
/// Affine in `l_other`.
pub fn count_attention_ops(l_other: usize, embed_dim: usize, heads: usize) -> usize {
    (1 + l_other) * (embed_dim + heads)
}

/// Full self-attention over `1 + l` tokens. Quadratic in `l`.
pub fn count_self_attention_ops(l: usize, embed_dim: usize, heads: usize) -> usize {
    (1 + l) * (1 + l) * (embed_dim + heads)
}
