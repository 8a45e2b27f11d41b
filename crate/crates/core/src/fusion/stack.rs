use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::attention::EncoderBlock;
use crate::fusion::branch::{BranchConfig, BranchState};
use crate::fusion::cross::CrossFusion;
use crate::nn::{Bound, Init};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

/// Depth schedule: `small_depth` (N) and `large_depth` (M) encoder blocks per
/// round on the two branches, repeated for `rounds` (K) fusion rounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionStackConfig {
    pub small_depth: usize,
    pub large_depth: usize,
    pub rounds: usize,
}

impl Default for FusionStackConfig {
    fn default() -> Self {
        Self {
            small_depth: 2,
            large_depth: 2,
            rounds: 3,
        }
    }
}

impl FusionStackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.small_depth == 0 || self.large_depth == 0 || self.rounds == 0 {
            return Err(Error::Config(format!(
                "fusion depths must be >= 1, got N={} M={} K={}",
                self.small_depth, self.large_depth, self.rounds
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Round {
    small: Vec<EncoderBlock>,
    large: Vec<EncoderBlock>,
    small_from_large: CrossFusion,
    large_from_small: CrossFusion,
    small_post: EncoderBlock,
    large_post: EncoderBlock,
}

#[derive(Clone, Debug)]
pub struct FusionStack {
    cfg: FusionStackConfig,
    rounds: Vec<Round>,
}

pub struct FusionOutput {
    /// `[B, 1, C_small]`
    pub cls_small: Var,
    /// `[B, 1, C_large]`
    pub cls_large: Var,
    /// Per round: (small ← large, large ← small) cross-attention maps.
    pub cross_attention: Vec<(Var, Var)>,
}

impl FusionStack {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        cfg: &FusionStackConfig,
        small: &BranchConfig,
        large: &BranchConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (cs, cl) = (small.embed_dim, large.embed_dim);
        let mut rounds = Vec::with_capacity(cfg.rounds);
        for r in 0..cfg.rounds {
            let mut ri = init.sub(&format!("round{r}"));
            let small_blocks = (0..cfg.small_depth)
                .map(|i| EncoderBlock::new(&mut ri.sub(&format!("small/block{i}")), cs, small.heads))
                .collect::<Result<Vec<_>>>()?;
            let large_blocks = (0..cfg.large_depth)
                .map(|i| EncoderBlock::new(&mut ri.sub(&format!("large/block{i}")), cl, large.heads))
                .collect::<Result<Vec<_>>>()?;
            rounds.push(Round {
                small: small_blocks,
                large: large_blocks,
                small_from_large: CrossFusion::new(&mut ri.sub("cross_small"), cs, cl, large.heads)?,
                large_from_small: CrossFusion::new(&mut ri.sub("cross_large"), cl, cs, small.heads)?,
                small_post: EncoderBlock::new(&mut ri.sub("small/post"), cs, small.heads)?,
                large_post: EncoderBlock::new(&mut ri.sub("large/post"), cl, large.heads)?,
            });
        }
        Ok(Self {
            cfg: cfg.clone(),
            rounds,
        })
    }

    pub fn config(&self) -> &FusionStackConfig {
        &self.cfg
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        mut small: BranchState,
        mut large: BranchState,
    ) -> Result<FusionOutput> {
        let mut maps = Vec::with_capacity(self.rounds.len());
        for round in &self.rounds {
            for blk in &round.small {
                small = small.with_tokens(blk.forward(tape, p, small.tokens)?);
            }
            for blk in &round.large {
                large = large.with_tokens(blk.forward(tape, p, large.tokens)?);
            }
            // both directions read the pre-fusion states
            let s = round.small_from_large.forward(tape, p, &small, &large)?;
            let l = round.large_from_small.forward(tape, p, &large, &small)?;
            maps.push((s.attention, l.attention));
            small = s.state.with_tokens(round.small_post.forward(tape, p, s.state.tokens)?);
            large = l.state.with_tokens(round.large_post.forward(tape, p, l.state.tokens)?);
        }
        Ok(FusionOutput {
            cls_small: small.cls(tape)?,
            cls_large: large.cls(tape)?,
            cross_attention: maps,
        })
    }
}
