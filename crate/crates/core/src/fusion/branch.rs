use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, Init, ParamId};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    /// Side length of the square patches, in pixels.
    pub patch_size: usize,
    pub embed_dim: usize,
    /// Side length of the square image this branch consumes.
    pub input_size: usize,
    pub heads: usize,
}

impl BranchConfig {
    pub fn validate(&self, which: &str) -> Result<()> {
        if self.patch_size == 0 || self.embed_dim == 0 || self.heads == 0 || self.input_size == 0 {
            return Err(Error::Config(format!("{which}: sizes must be positive")));
        }
        if !self.input_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "{which}: input size {} is not divisible by patch size {}",
                self.input_size, self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{which}: embed dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.input_size / self.patch_size
    }

    /// Patch tokens per image, excluding the CLS token.
    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }
}

/// One branch's token sequence `[B, 1 + L, C]`; position 0 is the CLS token.
#[derive(Clone, Copy, Debug)]
pub struct BranchState {
    pub tokens: Var,
    pub num_patches: usize,
    pub embed_dim: usize,
}

impl BranchState {
    pub fn cls<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Var> {
        tape.narrow(self.tokens, 1, 0, 1)
    }

    pub fn patches<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Var> {
        tape.narrow(self.tokens, 1, 1, self.num_patches)
    }

    pub fn with_tokens(&self, tokens: Var) -> Self {
        Self { tokens, ..*self }
    }
}

/// Linear patch projection plus CLS token and position embeddings.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub cfg: BranchConfig,
    image_channels: usize,
    proj_w: ParamId,
    proj_b: ParamId,
    cls: ParamId,
    pos: ParamId,
}

impl PatchEmbed {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BranchConfig, image_channels: usize) -> Result<Self> {
        cfg.validate("branch")?;
        let (p, c) = (cfg.patch_size, cfg.embed_dim);
        let fan_in = image_channels * p * p;
        Ok(Self {
            cfg: cfg.clone(),
            image_channels,
            proj_w: init.normal("proj/w", &[c, image_channels, p, p], (1.0 / fan_in as f64).sqrt()),
            proj_b: init.zeros("proj/b", &[c]),
            cls: init.normal("cls", &[1, 1, c], 0.02),
            pos: init.normal("pos", &[1, cfg.num_patches() + 1, c], 0.02),
        })
    }

    pub fn pos_param(&self) -> ParamId {
        self.pos
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, image: Var) -> Result<BranchState> {
        let s = tape.shape(image).to_vec();
        if s.len() != 4 || s[1] != self.image_channels {
            return Err(Error::Contract(format!(
                "patch embedding expects [B, {}, S, S], got {s:?}",
                self.image_channels
            )));
        }
        let ps = self.cfg.patch_size;
        if !s[2].is_multiple_of(ps) || !s[3].is_multiple_of(ps) {
            return Err(Error::Config(format!(
                "image {}x{} is not divisible by patch size {ps}",
                s[2], s[3]
            )));
        }
        if s[2] != self.cfg.input_size || s[3] != self.cfg.input_size {
            return Err(Error::Contract(format!(
                "branch expects {0}x{0} images, got {1}x{2}",
                self.cfg.input_size, s[2], s[3]
            )));
        }
        let (b, c, l) = (s[0], self.cfg.embed_dim, self.cfg.num_patches());
        let grid = tape.conv2d(image, p[self.proj_w], Some(p[self.proj_b]), ps, 0)?;
        let flat = tape.reshape(grid, &[b, c, l])?;
        let patches = tape.permute(flat, &[0, 2, 1])?;
        let zeros = tape.constant(Tensor::zeros([b, 1, c]));
        let cls = tape.add(zeros, p[self.cls])?;
        let tokens = tape.concat(&[cls, patches], 1)?;
        let tokens = tape.add(tokens, p[self.pos])?;
        Ok(BranchState {
            tokens,
            num_patches: l,
            embed_dim: c,
        })
    }
}
