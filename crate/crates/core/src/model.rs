//! The full classifier: optional denoising autoencoder, per-branch resize and
//! patch embedding, the fusion stack, and the head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{BranchConfig, FusionOutput, FusionStack, FusionStackConfig, PatchEmbed};
use crate::head::{Head, HeadConfig, HeadKind};
use crate::nn::{Bound, Init, ParamStore};
use crate::nrca::{Nrca, NrcaConfig};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_channels: usize,
    /// Resolution the autoencoder runs at; inputs of other sizes are resized.
    pub image_size: usize,
    pub branch_small: BranchConfig,
    pub branch_large: BranchConfig,
    pub fusion: FusionStackConfig,
    pub nrca: NrcaConfig,
    pub head: HeadConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Patch 12 / embed 192 (small branch at 240×240) and patch 16 / embed 384
    /// (large branch at 224×224).
    fn default() -> Self {
        Self {
            image_channels: 3,
            image_size: 224,
            branch_small: BranchConfig {
                patch_size: 12,
                embed_dim: 192,
                input_size: 240,
                heads: 3,
            },
            branch_large: BranchConfig {
                patch_size: 16,
                embed_dim: 384,
                input_size: 224,
                heads: 6,
            },
            fusion: FusionStackConfig::default(),
            nrca: NrcaConfig::default(),
            head: HeadConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration: 48×48 inputs, patches 12/16, embed 32/64,
    /// one block per branch and one fusion round.
    pub fn toy() -> Self {
        Self {
            image_channels: 3,
            image_size: 48,
            branch_small: BranchConfig {
                patch_size: 12,
                embed_dim: 32,
                input_size: 48,
                heads: 2,
            },
            branch_large: BranchConfig {
                patch_size: 16,
                embed_dim: 64,
                input_size: 48,
                heads: 4,
            },
            fusion: FusionStackConfig {
                small_depth: 1,
                large_depth: 1,
                rounds: 1,
            },
            nrca: NrcaConfig {
                encoder_channels: vec![8, 16],
                latent_channels: 16,
                ..NrcaConfig::default()
            },
            head: HeadConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_channels == 0 || self.image_size == 0 {
            return Err(Error::Config("image_channels and image_size must be positive".into()));
        }
        self.branch_small.validate("branch_small")?;
        self.branch_large.validate("branch_large")?;
        self.fusion.validate()?;
        self.head.validate()?;
        self.nrca.validate()?;
        if self.nrca.enabled && !self.image_size.is_multiple_of(self.nrca.required_divisor()) {
            return Err(Error::Config(format!(
                "image_size {} must be divisible by {} for the autoencoder",
                self.image_size,
                self.nrca.required_divisor()
            )));
        }
        Ok(())
    }

    /// Copy with the branch patch sizes replaced. A branch whose patch size
    /// does not divide its input size takes the input size the base config
    /// uses for that patch size, or the next multiple of the patch otherwise.
    pub fn with_patch_pair(&self, small_patch: usize, large_patch: usize) -> Self {
        let size_for = |patch: usize, fallback: usize| -> usize {
            if fallback.is_multiple_of(patch) {
                return fallback;
            }
            [&self.branch_small, &self.branch_large]
                .iter()
                .find(|b| b.patch_size == patch)
                .map(|b| b.input_size)
                .unwrap_or_else(|| fallback.div_ceil(patch) * patch)
        };
        let mut cfg = self.clone();
        cfg.branch_small.input_size = size_for(small_patch, self.branch_small.input_size);
        cfg.branch_small.patch_size = small_patch;
        cfg.branch_large.input_size = size_for(large_patch, self.branch_large.input_size);
        cfg.branch_large.patch_size = large_patch;
        cfg
    }

    pub fn with_nrca(&self, enabled: bool) -> Self {
        let mut cfg = self.clone();
        cfg.nrca.enabled = enabled;
        cfg
    }

    pub fn with_head(&self, kind: HeadKind) -> Self {
        let mut cfg = self.clone();
        cfg.head.kind = kind;
        cfg
    }
}

pub struct ForwardOutput {
    /// `[B, num_classes]`
    pub logits: Var,
    /// Autoencoder output at `image_size`, when enabled.
    pub denoised: Option<Var>,
    /// The model input after resizing to `image_size`.
    pub input: Var,
    pub fusion: FusionOutput,
}

#[derive(Clone, Debug)]
pub struct FcflModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    nrca: Option<Nrca>,
    small: PatchEmbed,
    large: PatchEmbed,
    fusion: FusionStack,
    head: Head,
}

impl<T: Scalar> FcflModel<T> {
    /// Fresh parameters drawn from a generator seeded with `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = Init::new(&mut params, &mut rng);
        let nrca = if config.nrca.enabled {
            Some(Nrca::new(&mut init.sub("nrca"), &config.nrca, config.image_channels)?)
        } else {
            None
        };
        let small = PatchEmbed::new(
            &mut init.sub("embed_small"),
            &config.branch_small,
            config.image_channels,
        )?;
        let large = PatchEmbed::new(
            &mut init.sub("embed_large"),
            &config.branch_large,
            config.image_channels,
        )?;
        let fusion = FusionStack::new(
            &mut init.sub("fusion"),
            &config.fusion,
            &config.branch_small,
            &config.branch_large,
        )?;
        let head = Head::new(
            &mut init.sub("head"),
            &config.head,
            config.branch_small.embed_dim,
            config.branch_large.embed_dim,
        )?;
        Ok(Self {
            config,
            params,
            nrca,
            small,
            large,
            fusion,
            head,
        })
    }

    /// Rebuilds the model structure for `config` and installs `params`, which
    /// must match the structure's names and shapes exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config)?;
        if model.params.names() != params.names() {
            return Err(Error::Contract(
                "parameter names do not match the model configuration".into(),
            ));
        }
        for (id, name, t) in model.params.iter() {
            let got = params.get(id).shape();
            if t.shape() != got {
                return Err(Error::Contract(format!(
                    "parameter {name}: expected shape {:?}, found {got:?}",
                    t.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn nrca(&self) -> Option<&Nrca> {
        self.nrca.as_ref()
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn embed_small(&self) -> &PatchEmbed {
        &self.small
    }

    pub fn embed_large(&self) -> &PatchEmbed {
        &self.large
    }

    pub fn fusion(&self) -> &FusionStack {
        &self.fusion
    }

    /// Same structure and parameter values in another precision.
    pub fn cast<U: Scalar>(&self) -> FcflModel<U> {
        FcflModel {
            config: self.config.clone(),
            params: self.params.cast(),
            nrca: self.nrca.clone(),
            small: self.small.clone(),
            large: self.large.clone(),
            fusion: self.fusion.clone(),
            head: self.head.clone(),
        }
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != self.config.image_channels {
            return Err(Error::Contract(format!(
                "model expects [B, {}, H, W] images, got {shape:?}",
                self.config.image_channels
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, images: Var) -> Result<ForwardOutput> {
        self.check_input(tape.shape(images))?;
        let size = self.config.image_size;
        let input = tape.resize_bilinear(images, size, size)?;
        let (x, denoised) = match &self.nrca {
            Some(nrca) => {
                let d = nrca.forward(tape, p, input)?;
                (d, Some(d))
            }
            None => (input, None),
        };
        let s = self.config.branch_small.input_size;
        let l = self.config.branch_large.input_size;
        let xs = tape.resize_bilinear(x, s, s)?;
        let xl = tape.resize_bilinear(x, l, l)?;
        let small = self.small.forward(tape, p, xs)?;
        let large = self.large.forward(tape, p, xl)?;
        let fusion = self.fusion.forward(tape, p, small, large)?;
        let logits = self.head.forward(tape, p, fusion.cls_small, fusion.cls_large)?;
        Ok(ForwardOutput {
            logits,
            denoised,
            input,
            fusion,
        })
    }

    /// Logits for a batch, without recording gradients.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::no_grad();
        let p = self.params.bind(&mut tape);
        let x = tape.constant(images.clone());
        let out = self.forward(&mut tape, &p, x)?;
        Ok(tape.value(out.logits).clone())
    }
}
