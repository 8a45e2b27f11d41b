//! Dual-branch multi-scale transformer.
//!
//! Each branch embeds non-overlapping patches of its own size, prepends a CLS
//! token and adds learnable position embeddings. A fusion round runs `N`
//! encoder blocks on the small-patch branch and `M` on the large-patch branch,
//! lets each branch's CLS token attend to the other branch's patch tokens, and
//! finishes with one self-attention block per branch. `K` rounds are stacked.

mod attention;
mod branch;
mod complexity;
mod cross;
mod stack;

pub use attention::{EncoderBlock, MultiHeadAttention};
pub use branch::{BranchConfig, BranchState, PatchEmbed};
pub use complexity::{count_attention_ops, count_self_attention_ops};
pub use cross::{CrossFusion, CrossOutput};
pub use stack::{FusionOutput, FusionStack, FusionStackConfig};
